#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairaudit/dataset.hpp"
#include "fairaudit/lstm.hpp"
#include "json.hpp"

namespace fairaudit {

struct ModelConfig {
  int input_length = 48;  // 56 for the attribute-aware variant
  int hidden = 32;
  int recurrent_layers = 3;
  double dropout = 0.2;
  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 50;
  int finetune_epochs = 50;
  double finetune_learning_rate = 1e-3;
  // Weight samples so both classes contribute equally to the loss.
  bool balance_classes = false;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Per-time-step z-scoring fitted on training inputs.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& features);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& features) const;
};

// T x N raw features: 48 hourly counts, then the 8 indicators when aware.
// Throws ConfigError when an aware matrix is requested for a window without
// its extension.
Eigen::MatrixXd feature_matrix(std::span<const LabeledWindow> windows, bool aware);
Eigen::RowVectorXd label_vector(std::span<const LabeledWindow> windows);

struct SequenceModel {
  ModelConfig config;
  Standardizer standardizer;
  nn::LstmNetwork<double> network{nn::NetworkShape{}};

  bool aware() const { return config.input_length == 56; }
  Eigen::MatrixXd inputs(std::span<const LabeledWindow> windows) const;
};

struct Prediction {
  double probability = 0.5;
  ActivityLabel label = ActivityLabel::kHigh;
  // Personalized model had no branch for the user and used the shared head.
  bool fallback = false;
};

inline ActivityLabel hard_label(double probability) {
  return probability >= 0.5 ? ActivityLabel::kHigh : ActivityLabel::kLow;
}

// Freshly initialized network; the output layer starts at zero.
SequenceModel initialize_model(const ModelConfig& config,
                               const Standardizer& standardizer);

struct TrainingResult {
  SequenceModel model;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> epoch_losses;
  std::vector<std::string> warnings;
};

// Mean-BCE training with Adam over shuffled mini-batches. The parameters with
// the lowest full-set training loss (including the initial ones) are kept.
// Throws TrainingError on a non-finite loss.
TrainingResult train_shared(std::span<const LabeledWindow> train,
                            const ModelConfig& config, bool aware);

double training_loss(const SequenceModel& model, std::span<const LabeledWindow> windows);

Prediction predict(const SequenceModel& model, const LabeledWindow& window);
std::vector<double> predict_proba(const SequenceModel& model,
                                  std::span<const LabeledWindow> windows);

struct PersonalizedModel {
  SequenceModel shared;
  Eigen::VectorXd head_g0;  // [w; b], starts as the shared head
  Eigen::VectorXd head_g1;
  GroupPartition partition;
  bool g0_kept_shared = false;
  bool g1_kept_shared = false;

  // Shared head when the user has no group.
  Eigen::VectorXd head_for(std::optional<Group> g) const;
};

struct PersonalizationResult {
  PersonalizedModel model;
  double loss_before_g0 = 0.0;
  double loss_after_g0 = 0.0;
  double loss_before_g1 = 0.0;
  double loss_after_g1 = 0.0;
  std::vector<std::string> warnings;
};

// Freezes the recurrent layers and fine-tunes a copy of the output layer on
// each group's training windows. A group without training windows keeps the
// shared head and is reported in `warnings`.
PersonalizationResult personalize(const SequenceModel& shared,
                                  const GroupPartition& partition,
                                  std::span<const LabeledWindow> train,
                                  const ModelConfig& config);

Prediction predict(const PersonalizedModel& model, const LabeledWindow& window);
std::vector<double> predict_proba(const PersonalizedModel& model,
                                  std::span<const LabeledWindow> windows);

// Largest relative error between back-propagated and central-difference
// gradients of the single-sample loss (dropout off, extended precision).
double gradient_check(const SequenceModel& model, const LabeledWindow& sample,
                      double eps = 1e-5);

// Versioned JSON checkpoints. Doubles are written with round-trip precision.
nlohmann::json to_json(const SequenceModel& model);
SequenceModel sequence_model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PersonalizedModel& model);
PersonalizedModel personalized_model_from_json(const nlohmann::json& j);
void save_json(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json load_json(const std::filesystem::path& path);

}  // namespace fairaudit
