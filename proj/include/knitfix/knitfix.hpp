#pragma once

#include "knitfix/error.hpp"
#include "knitfix/metrics.hpp"
#include "knitfix/nn.hpp"
#include "knitfix/pipeline.hpp"
#include "knitfix/search.hpp"
#include "knitfix/seed.hpp"
#include "knitfix/series.hpp"
#include "knitfix/simulate.hpp"
#include "knitfix/smoothing.hpp"
