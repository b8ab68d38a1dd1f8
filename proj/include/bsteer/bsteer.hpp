#pragma once

// Umbrella header: the whole library.

#include "bsteer/barrier.hpp"
#include "bsteer/bench.hpp"
#include "bsteer/compose.hpp"
#include "bsteer/core.hpp"
#include "bsteer/dump_io.hpp"
#include "bsteer/dynamics.hpp"
#include "bsteer/errors.hpp"
#include "bsteer/mlp.hpp"
#include "bsteer/model_io.hpp"
#include "bsteer/qp_solver.hpp"
#include "bsteer/rng.hpp"
#include "bsteer/run_config.hpp"
#include "bsteer/steering.hpp"
#include "bsteer/synthetic.hpp"
#include "bsteer/traj_io.hpp"
#include "bsteer/train.hpp"
#include "bsteer/verification.hpp"
#include "bsteer/version.hpp"
