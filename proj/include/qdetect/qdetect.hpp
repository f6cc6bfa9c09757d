#pragma once

#include "qdetect/bayes.hpp"
#include "qdetect/density.hpp"
#include "qdetect/detect.hpp"
#include "qdetect/engine.hpp"
#include "qdetect/errors.hpp"
#include "qdetect/formulas.hpp"
#include "qdetect/headstart.hpp"
#include "qdetect/montecarlo.hpp"
#include "qdetect/random.hpp"
#include "qdetect/stats.hpp"

namespace qdetect {
inline constexpr const char* version = "0.1.0";
}
