#pragma once

#include "causalkit/error.hpp"
#include "causalkit/stats.hpp"
#include "causalkit/data.hpp"
#include "causalkit/graph.hpp"
#include "causalkit/discovery.hpp"
#include "causalkit/bayesnet.hpp"
#include "causalkit/validation.hpp"
#include "causalkit/elicitation.hpp"
