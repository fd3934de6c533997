#pragma once

// Umbrella header.

#include "mcgmenn/errors.hpp"
#include "mcgmenn/neural_net.hpp"
#include "mcgmenn/random_effects.hpp"
#include "mcgmenn/sampler.hpp"
#include "mcgmenn/dataset.hpp"
#include "mcgmenn/training.hpp"
#include "mcgmenn/mcem.hpp"
#include "mcgmenn/encoders.hpp"
#include "mcgmenn/baselines.hpp"
#include "mcgmenn/simulation.hpp"
#include "mcgmenn/metrics.hpp"
#include "mcgmenn/io.hpp"
#include "mcgmenn/runner.hpp"
