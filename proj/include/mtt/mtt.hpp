#pragma once

// Umbrella header for the multiple-target tracking library.

#include "mtt/assignment.hpp"
#include "mtt/common.hpp"
#include "mtt/data.hpp"
#include "mtt/em.hpp"
#include "mtt/io.hpp"
#include "mtt/kalman.hpp"
#include "mtt/model.hpp"
#include "mtt/rng.hpp"
#include "mtt/simulator.hpp"
#include "mtt/smc.hpp"
#include "mtt/smoothing.hpp"
#include "mtt/stats.hpp"
