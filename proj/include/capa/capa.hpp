#pragma once

// Umbrella header: the whole library.

#include "capa/analysis.hpp"
#include "capa/core.hpp"
#include "capa/errors.hpp"
#include "capa/io.hpp"
#include "capa/metrics.hpp"
#include "capa/numeric.hpp"
#include "capa/rng.hpp"
#include "capa/simulation.hpp"
#include "capa/stats.hpp"
