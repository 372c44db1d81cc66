#pragma once

// Finite mixtures of logistic regressions fitted by stochastic EM, with
// maximum-likelihood, ridge and Liu-type M-step solvers for multicollinear
// designs, plus the synthetic-study and evaluation machinery around them.

#include "mixlr/csv.hpp"
#include "mixlr/experiment.hpp"
#include "mixlr/metrics.hpp"
#include "mixlr/model.hpp"
#include "mixlr/rng.hpp"
#include "mixlr/sem.hpp"
#include "mixlr/simulate.hpp"
#include "mixlr/solvers.hpp"
