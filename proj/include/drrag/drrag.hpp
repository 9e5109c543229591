#pragma once

#include "drrag/agent.hpp"
#include "drrag/backends.hpp"
#include "drrag/config.hpp"
#include "drrag/diagnosis.hpp"
#include "drrag/errors.hpp"
#include "drrag/http_backends.hpp"
#include "drrag/injection.hpp"
#include "drrag/keyword_retriever.hpp"
#include "drrag/metrics.hpp"
#include "drrag/pipeline.hpp"
#include "drrag/prompts.hpp"
#include "drrag/repair.hpp"
#include "drrag/report.hpp"
#include "drrag/scripted.hpp"
#include "drrag/taxonomy.hpp"
#include "drrag/trajectory.hpp"
#include "drrag/trajectory_json.hpp"
