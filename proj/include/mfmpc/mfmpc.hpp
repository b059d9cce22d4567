#pragma once

/// Umbrella header.

#include "bounds.hpp"
#include "costs.hpp"
#include "dynamics.hpp"
#include "errors.hpp"
#include "experiments.hpp"
#include "io.hpp"
#include "lp.hpp"
#include "measures.hpp"
#include "mpc.hpp"
