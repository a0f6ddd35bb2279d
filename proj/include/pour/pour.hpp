#pragma once

#include "pour/core.hpp"
#include "pour/geometry.hpp"
#include "pour/synthetic_nc.hpp"
#include "pour/metrics.hpp"
#include "pour/toy_model.hpp"
#include "pour/unlearn.hpp"
#include "pour/bounds.hpp"
#include "pour/checkpoint.hpp"
#include "pour/config.hpp"
#include "pour/report.hpp"
#include "pour/experiment.hpp"
