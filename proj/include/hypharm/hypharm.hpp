#pragma once

#include "hypharm/core.hpp"
#include "hypharm/geometry.hpp"
#include "hypharm/quadrature.hpp"
#include "hypharm/boundary.hpp"
#include "hypharm/extension.hpp"
#include "hypharm/calculus.hpp"
#include "hypharm/flow.hpp"
#include "hypharm/verify.hpp"
#include "hypharm/hopf.hpp"
