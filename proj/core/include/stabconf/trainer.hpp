#pragma once

#include <functional>
#include <vector>

#include "stabconf/dataset.hpp"
#include "stabconf/ridge.hpp"

namespace stabconf {

/// A fitted predictor function X -> R.
using Predictor = std::function<double(const std::vector<double>&)>;

/// A symmetric training algorithm: dataset in, predictor out. Symmetry
/// (invariance under row permutations) is a contract on the callee; the
/// conformal constructions assume it.
using Trainer = std::function<Predictor(const Dataset&)>;

/// Ridge trainer with the given config.
Trainer ridge_trainer(const ridge::Config& config);

/// Predicts the mean of the training responses, ignoring x.
Trainer mean_trainer();

/// Always predicts `value`, ignoring the data entirely.
Trainer constant_trainer(double value);

}  // namespace stabconf
