#pragma once

// Two-stage trigonometric regression for longitudinal circadian data:
// individual-level cosinor fits, STS / RTS population estimators,
// Wald and bootstrap tests, forward order selection, and the Monte Carlo
// study engine.

#include "circadia/core.hpp"
#include "circadia/inference.hpp"
#include "circadia/io.hpp"
#include "circadia/math.hpp"
#include "circadia/parallel.hpp"
#include "circadia/rng.hpp"
#include "circadia/select.hpp"
#include "circadia/simulate.hpp"
#include "circadia/trig.hpp"
#include "circadia/two_stage.hpp"
