#pragma once

#include "ctmdp/conditions.hpp"
#include "ctmdp/config.hpp"
#include "ctmdp/dsv.hpp"
#include "ctmdp/model.hpp"
#include "ctmdp/model_io.hpp"
#include "ctmdp/policy.hpp"
#include "ctmdp/quadrature.hpp"
#include "ctmdp/queueing.hpp"
#include "ctmdp/random.hpp"
#include "ctmdp/residuals.hpp"
#include "ctmdp/run.hpp"
#include "ctmdp/simulator.hpp"
#include "ctmdp/solver.hpp"
#include "ctmdp/version.hpp"
