#pragma once

#include "infoacq/cost.hpp"
#include "infoacq/equilibrium.hpp"
#include "infoacq/errors.hpp"
#include "infoacq/format.hpp"
#include "infoacq/full_value.hpp"
#include "infoacq/hjb.hpp"
#include "infoacq/model.hpp"
#include "infoacq/riccati.hpp"
#include "infoacq/simulator.hpp"
