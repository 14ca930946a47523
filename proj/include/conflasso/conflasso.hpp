#pragma once

#include "conflasso/types.hpp"
#include "conflasso/cholesky.hpp"
#include "conflasso/lasso.hpp"
#include "conflasso/homotopy.hpp"
#include "conflasso/conformal.hpp"
#include "conflasso/bspline.hpp"
#include "conflasso/simdata.hpp"
#include "conflasso/io.hpp"
