#pragma once

// Umbrella header for the whole library.

#include "udr/core.hpp"
#include "udr/harness.hpp"
#include "udr/io.hpp"
#include "udr/lasso.hpp"
#include "udr/parallel.hpp"
#include "udr/pipeline.hpp"
#include "udr/rng.hpp"
#include "udr/similarity.hpp"
#include "udr/simulator.hpp"
#include "udr/stats.hpp"
#include "udr/supervised.hpp"
#include "udr/udr.hpp"

namespace udr {
inline constexpr const char* kVersion = "0.1.0";
}
