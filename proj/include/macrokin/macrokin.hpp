#pragma once

// Umbrella header.
#include "macrokin/csv.hpp"
#include "macrokin/equilibrium.hpp"
#include "macrokin/errors.hpp"
#include "macrokin/exact_linalg.hpp"
#include "macrokin/master_eq.hpp"
#include "macrokin/model.hpp"
#include "macrokin/parallel.hpp"
#include "macrokin/quasimean.hpp"
#include "macrokin/rng.hpp"
#include "macrokin/ssa.hpp"
#include "macrokin/stats.hpp"
