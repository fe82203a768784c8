#pragma once

// Everything except the network backends and the pipeline driver, which
// need OpenSSL at link time.

#include "agentsynth/backends.hpp"
#include "agentsynth/builtin_data.hpp"
#include "agentsynth/catalog.hpp"
#include "agentsynth/core/error.hpp"
#include "agentsynth/core/json.hpp"
#include "agentsynth/core/parallel.hpp"
#include "agentsynth/core/rng.hpp"
#include "agentsynth/core/text.hpp"
#include "agentsynth/grammar.hpp"
#include "agentsynth/objectives.hpp"
#include "agentsynth/plans.hpp"
#include "agentsynth/quality.hpp"
#include "agentsynth/reward.hpp"
#include "agentsynth/schedule.hpp"
#include "agentsynth/select.hpp"
#include "agentsynth/templates.hpp"
#include "agentsynth/trajectory.hpp"
#include "agentsynth/workflow.hpp"
