#pragma once

#include <string>
#include <vector>

#include "fairaudit/common.hpp"
#include "fairaudit/dataset.hpp"
#include "fairaudit/model.hpp"

namespace testutil {

using namespace fairaudit;

inline LabeledWindow random_window(Rng& rng, const std::string& user, bool high) {
  LabeledWindow w;
  w.user_id = user;
  for (auto& v : w.history) v = static_cast<std::int64_t>(rng.below(1500));
  w.label = high ? ActivityLabel::kHigh : ActivityLabel::kLow;
  return w;
}

// Shared model of the given shape with every parameter (head included) drawn
// uniformly from [-scale, scale].
inline SequenceModel random_model(std::uint64_t seed, int hidden, int layers,
                                  std::span<const LabeledWindow> fit_on, double scale = 0.5) {
  ModelConfig config;
  config.hidden = hidden;
  config.recurrent_layers = layers;
  config.seed = seed;
  auto model = initialize_model(config, Standardizer::fit(feature_matrix(fit_on, false)));
  Rng rng(seed);
  for (auto& p : model.network.parameters()) p = (2.0 * rng.uniform() - 1.0) * scale;
  return model;
}

// Window whose hourly counts are all `level`.
inline LabeledWindow flat_window(const std::string& user, std::int64_t level, bool high) {
  LabeledWindow w;
  w.user_id = user;
  w.history.fill(level);
  w.label = high ? ActivityLabel::kHigh : ActivityLabel::kLow;
  return w;
}

inline double accuracy(const std::vector<double>& proba, std::span<const LabeledWindow> windows) {
  int correct = 0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    correct += (proba[i] >= 0.5) == windows[i].positive();
  }
  return static_cast<double>(correct) / static_cast<double>(windows.size());
}

}  // namespace testutil
