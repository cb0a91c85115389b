#pragma once

#include "orbitflow/core.hpp"
#include "orbitflow/orbit_metric.hpp"
#include "orbitflow/reduction.hpp"
#include "orbitflow/dynamics.hpp"
#include "orbitflow/ode.hpp"
#include "orbitflow/integrate.hpp"
#include "orbitflow/polar.hpp"
#include "orbitflow/oracle.hpp"
#include "orbitflow/random.hpp"
#include "orbitflow/io.hpp"
