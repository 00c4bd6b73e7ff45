#pragma once

#include "mecache/bnb.hpp"
#include "mecache/energy.hpp"
#include "mecache/harness.hpp"
#include "mecache/model.hpp"
#include "mecache/report.hpp"
#include "mecache/scenario.hpp"
#include "mecache/scenario_io.hpp"
#include "mecache/schemes.hpp"
#include "mecache/subproblem.hpp"
