#pragma once

// Umbrella header: the whole toolkit.

#include "geomech/errors.hpp"
#include "geomech/manifold.hpp"
#include "geomech/systems.hpp"
#include "geomech/lagrangian.hpp"
#include "geomech/hamiltonian.hpp"
#include "geomech/symmetry.hpp"
#include "geomech/config.hpp"
#include "geomech/runner.hpp"
