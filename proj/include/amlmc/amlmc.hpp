#pragma once

#include "adaptive_mesh.hpp"
#include "errors.hpp"
#include "experiment.hpp"
#include "linalg.hpp"
#include "mesh.hpp"
#include "mlmc.hpp"
#include "problems.hpp"
#include "quadrature.hpp"
#include "rng.hpp"
#include "solver.hpp"
#include "statistics.hpp"
#include "thread_pool.hpp"
#include "wiener_path.hpp"
