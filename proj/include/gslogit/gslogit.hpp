#pragma once
#include "core.hpp"
#include "rng.hpp"
#include "parallel.hpp"
#include "linalg.hpp"
#include "design.hpp"
#include "model.hpp"
#include "prior.hpp"
#include "quadrature.hpp"
#include "geometry.hpp"
#include "posterior.hpp"
#include "verify.hpp"
#include "suite.hpp"
#include "io.hpp"
#include "config.hpp"
