#pragma once

// Umbrella header for the co-simulation kernel and experiment harness.

#include "cosim/config.hpp"
#include "cosim/harness.hpp"
#include "cosim/model.hpp"
#include "cosim/ode.hpp"
#include "cosim/oracles.hpp"
#include "cosim/orchestrator.hpp"
#include "cosim/report_io.hpp"
#include "cosim/signals.hpp"
