#pragma once

#include "lzdiss/error.hpp"
#include "lzdiss/quadrature.hpp"
#include "lzdiss/model.hpp"
#include "lzdiss/neqb.hpp"
#include "lzdiss/quapi.hpp"
#include "lzdiss/analysis.hpp"
#include "lzdiss/sweep.hpp"
