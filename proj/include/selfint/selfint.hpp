#pragma once

#include "diagnostics.hpp"
#include "energy.hpp"
#include "errors.hpp"
#include "fit.hpp"
#include "flow.hpp"
#include "gibbs.hpp"
#include "measure.hpp"
#include "parallel.hpp"
#include "point.hpp"
#include "polynomial.hpp"
#include "potential.hpp"
#include "random.hpp"
#include "sde.hpp"
#include "transport.hpp"
