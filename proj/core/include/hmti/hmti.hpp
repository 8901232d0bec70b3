#pragma once

#include "hmti/checkpoint.hpp"
#include "hmti/data.hpp"
#include "hmti/diagnostics.hpp"
#include "hmti/errors.hpp"
#include "hmti/euler_baseline.hpp"
#include "hmti/feec.hpp"
#include "hmti/forecast.hpp"
#include "hmti/mortar.hpp"
#include "hmti/nonlinearity.hpp"
#include "hmti/sensitivity.hpp"
#include "hmti/state.hpp"
#include "hmti/statistics.hpp"
#include "hmti/train.hpp"
#include "hmti/transformer.hpp"
