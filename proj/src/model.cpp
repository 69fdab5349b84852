#include "fairaudit/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "fairaudit/common.hpp"

namespace fairaudit {

using nlohmann::json;

void ModelConfig::validate() const {
  if (input_length != 48 && input_length != 56) {
    throw ConfigError("model.input_length must be 48 or 56");
  }
  if (hidden <= 0) throw ConfigError("model.hidden must be positive");
  if (recurrent_layers <= 0) throw ConfigError("model.recurrent_layers must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout must be in [0, 1)");
  if (!(learning_rate > 0.0)) throw ConfigError("model.learning_rate must be positive");
  if (!(finetune_learning_rate > 0.0)) {
    throw ConfigError("model.finetune_learning_rate must be positive");
  }
  if (batch_size <= 0) throw ConfigError("model.batch_size must be positive");
  if (epochs < 0 || finetune_epochs < 0) throw ConfigError("epoch counts must be >= 0");
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"input_length", c.input_length},
           {"hidden", c.hidden},
           {"recurrent_layers", c.recurrent_layers},
           {"dropout", c.dropout},
           {"learning_rate", c.learning_rate},
           {"batch_size", c.batch_size},
           {"epochs", c.epochs},
           {"finetune_epochs", c.finetune_epochs},
           {"finetune_learning_rate", c.finetune_learning_rate},
           {"balance_classes", c.balance_classes},
           {"seed", c.seed}};
}

void from_json(const json& j, ModelConfig& c) {
  if (!j.is_object()) throw ConfigError("model config must be an object");
  static const std::set<std::string> known = {
      "input_length", "hidden",          "recurrent_layers",       "dropout",
      "learning_rate", "batch_size",     "epochs",                 "finetune_epochs",
      "finetune_learning_rate",          "balance_classes",        "seed"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown model option '" + key + "'");
  }
  try {
    c.input_length = j.value("input_length", c.input_length);
    c.hidden = j.value("hidden", c.hidden);
    c.recurrent_layers = j.value("recurrent_layers", c.recurrent_layers);
    c.dropout = j.value("dropout", c.dropout);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.finetune_epochs = j.value("finetune_epochs", c.finetune_epochs);
    c.finetune_learning_rate = j.value("finetune_learning_rate", c.finetune_learning_rate);
    c.balance_classes = j.value("balance_classes", c.balance_classes);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& features) {
  Standardizer s;
  const auto n = static_cast<double>(features.cols());
  if (features.cols() == 0) {
    s.mean = Eigen::VectorXd::Zero(features.rows());
    s.scale = Eigen::VectorXd::Ones(features.rows());
    return s;
  }
  s.mean = features.rowwise().sum() / n;
  s.scale = ((features.colwise() - s.mean).array().square().rowwise().sum() / n).sqrt();
  // constant features pass through centred
  for (Eigen::Index i = 0; i < s.scale.size(); ++i) {
    if (!(s.scale[i] > 1e-12)) s.scale[i] = 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& features) const {
  if (features.rows() != mean.size()) {
    throw ConfigError("feature length does not match the fitted standardizer");
  }
  return (features.colwise() - mean).array().colwise() / scale.array();
}

Eigen::MatrixXd feature_matrix(std::span<const LabeledWindow> windows, bool aware) {
  const Eigen::Index T = aware ? 56 : 48;
  Eigen::MatrixXd out(T, static_cast<Eigen::Index>(windows.size()));
  for (std::size_t n = 0; n < windows.size(); ++n) {
    const auto& w = windows[n];
    const auto col = static_cast<Eigen::Index>(n);
    for (std::size_t t = 0; t < kHistoryHours; ++t) {
      out(static_cast<Eigen::Index>(t), col) = static_cast<double>(w.history[t]);
    }
    if (!aware) continue;
    if (!w.aware_extension) {
      throw ConfigError("aware model needs attribute features for user " + w.user_id);
    }
    for (std::size_t k = 0; k < kAwareFeatures; ++k) {
      out(static_cast<Eigen::Index>(kHistoryHours + k), col) = (*w.aware_extension)[k];
    }
  }
  return out;
}

Eigen::RowVectorXd label_vector(std::span<const LabeledWindow> windows) {
  Eigen::RowVectorXd y(static_cast<Eigen::Index>(windows.size()));
  for (std::size_t n = 0; n < windows.size(); ++n) {
    y[static_cast<Eigen::Index>(n)] = windows[n].positive() ? 1.0 : 0.0;
  }
  return y;
}

Eigen::MatrixXd SequenceModel::inputs(std::span<const LabeledWindow> windows) const {
  return standardizer.apply(feature_matrix(windows, aware()));
}

namespace {

nn::NetworkShape shape_of(const ModelConfig& c) {
  return {c.input_length, c.hidden, c.recurrent_layers};
}

struct Adam {
  Eigen::VectorXd m, v;
  double lr;
  long step = 0;

  Adam(Eigen::Index n, double learning_rate)
      : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)), lr(learning_rate) {}

  template <typename Params>
  void update(Params&& params, const Eigen::VectorXd& grad) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++step;
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
    params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
};

// Equal total weight per class; empty when balancing is off or one class is absent.
Eigen::RowVectorXd class_weights(const Eigen::RowVectorXd& y, bool balance) {
  if (!balance) return {};
  const double n = static_cast<double>(y.size());
  const double pos = y.sum();
  const double neg = n - pos;
  if (pos == 0.0 || neg == 0.0) return {};
  Eigen::RowVectorXd w(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    w[i] = y[i] > 0.5 ? n / (2.0 * pos) : n / (2.0 * neg);
  }
  return w;
}

template <typename Derived>
Eigen::MatrixXd gather(const Eigen::MatrixBase<Derived>& m, std::span<const Eigen::Index> cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(cols[k]);
  return out;
}

Eigen::RowVectorXd gather_row(const Eigen::RowVectorXd& v, std::span<const Eigen::Index> cols) {
  if (v.size() == 0) return {};
  Eigen::RowVectorXd out(static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out[static_cast<Eigen::Index>(k)] = v[cols[k]];
  return out;
}

Eigen::MatrixXd dropout_mask(Rng& rng, Eigen::Index rows, Eigen::Index cols, double rate) {
  Eigen::MatrixXd mask(rows, cols);
  const double keep = 1.0 - rate;
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) mask(r, c) = rng.uniform() < keep ? 1.0 / keep : 0.0;
  }
  return mask;
}

void check_finite(double loss, double lr, const char* phase) {
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << phase << " loss became non-finite (learning rate " << lr
        << "); try a smaller learning rate";
    throw TrainingError(msg.str());
  }
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vector(const json& j, Eigen::Index expected, const char* what) {
  const auto values = j.get<std::vector<double>>();
  if (expected >= 0 && static_cast<Eigen::Index>(values.size()) != expected) {
    throw ConfigError(std::string("checkpoint field '") + what + "' has the wrong length");
  }
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

SequenceModel initialize_model(const ModelConfig& config, const Standardizer& standardizer) {
  config.validate();
  SequenceModel model;
  model.config = config;
  model.standardizer = standardizer;
  model.network = nn::LstmNetwork<double>(shape_of(config));
  Rng rng(derive_seed(config.seed, 0));
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.hidden));
  auto trunk = model.network.parameters().head(model.network.layout().head_offset());
  for (Eigen::Index k = 0; k < trunk.size(); ++k) trunk[k] = bound * (2.0 * rng.uniform() - 1.0);
  model.network.head().setZero();
  return model;
}

double training_loss(const SequenceModel& model, std::span<const LabeledWindow> windows) {
  if (windows.empty()) return 0.0;
  const Eigen::RowVectorXd y = label_vector(windows);
  const Eigen::RowVectorXd z = nn::logits(model.network, model.inputs(windows));
  return nn::mean_bce<double>(z, y, class_weights(y, model.config.balance_classes));
}

TrainingResult train_shared(std::span<const LabeledWindow> train, const ModelConfig& config,
                            bool aware) {
  ModelConfig cfg = config;
  cfg.input_length = aware ? 56 : 48;
  cfg.validate();
  if (train.empty()) throw TrainingError("training set is empty");

  TrainingResult result;
  const Eigen::MatrixXd raw = feature_matrix(train, aware);
  result.model = initialize_model(cfg, Standardizer::fit(raw));
  auto& net = result.model.network;
  const Eigen::MatrixXd X = result.model.standardizer.apply(raw);
  const Eigen::RowVectorXd y = label_vector(train);
  const Eigen::RowVectorXd weights = class_weights(y, cfg.balance_classes);
  const double positives = y.sum();
  if (positives == 0.0 || positives == static_cast<double>(y.size())) {
    result.warnings.push_back("training set has a single class; the model degenerates to the prior");
  }

  auto full_loss = [&] { return nn::mean_bce<double>(nn::logits(net, X), y, weights); };
  result.initial_loss = full_loss();
  check_finite(result.initial_loss, cfg.learning_rate, "initial");
  double best = result.initial_loss;
  Eigen::VectorXd best_params = net.parameters();

  Rng rng(derive_seed(cfg.seed, 1));
  Adam adam(net.parameters().size(), cfg.learning_rate);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(X.cols()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto H = static_cast<Eigen::Index>(cfg.hidden);
  const auto L = static_cast<Eigen::Index>(cfg.recurrent_layers);
  Eigen::VectorXd grad;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const auto end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::span<const Eigen::Index> cols(order.data() + start, end - start);
      const Eigen::MatrixXd xb = gather(X, cols);
      const Eigen::RowVectorXd yb = gather_row(y, cols);
      const Eigen::RowVectorXd wb = gather_row(weights, cols);
      nn::DropoutMasks<double> masks;
      if (cfg.dropout > 0.0) {
        for (Eigen::Index l = 0; l + 1 < L; ++l) {
          masks.between.push_back(dropout_mask(rng, H, xb.cols(), cfg.dropout));
        }
        masks.top = dropout_mask(rng, H, xb.cols(), cfg.dropout);
      }
      const double batch_loss = nn::loss_and_gradient(net, xb, yb, grad, &masks, wb);
      check_finite(batch_loss, cfg.learning_rate, "batch");
      adam.update(net.parameters(), grad);
    }
    const double loss = full_loss();
    check_finite(loss, cfg.learning_rate, "training");
    result.epoch_losses.push_back(loss);
    if (loss < best) {
      best = loss;
      best_params = net.parameters();
    }
  }
  net.parameters() = best_params;
  result.final_loss = best;
  return result;
}

Prediction predict(const SequenceModel& model, const LabeledWindow& window) {
  const auto p = predict_proba(model, std::span<const LabeledWindow>(&window, 1));
  return {p[0], hard_label(p[0]), false};
}

namespace {

// Shared and personalized inference both go through here, so a personalized
// model whose heads equal the shared head reproduces it bit for bit.
double head_probability(const Eigen::MatrixXd& hidden, Eigen::Index column,
                        const Eigen::VectorXd& head) {
  const Eigen::Index H = hidden.rows();
  const double z = head.head(H).dot(hidden.col(column)) + head[H];
  return 1.0 / (1.0 + std::exp(-z));
}

}  // namespace

std::vector<double> predict_proba(const SequenceModel& model,
                                  std::span<const LabeledWindow> windows) {
  if (windows.empty()) return {};
  const Eigen::MatrixXd hidden = nn::final_hidden(model.network, model.inputs(windows));
  const Eigen::VectorXd head = model.network.head();
  std::vector<double> out(windows.size());
  for (std::size_t n = 0; n < windows.size(); ++n) {
    out[n] = head_probability(hidden, static_cast<Eigen::Index>(n), head);
  }
  return out;
}

Eigen::VectorXd PersonalizedModel::head_for(std::optional<Group> g) const {
  if (g == Group::kG0) return head_g0;
  if (g == Group::kG1) return head_g1;
  return shared.network.head();
}

PersonalizationResult personalize(const SequenceModel& shared, const GroupPartition& partition,
                                  std::span<const LabeledWindow> train,
                                  const ModelConfig& config) {
  config.validate();
  PersonalizationResult result;
  auto& pm = result.model;
  pm.shared = shared;
  pm.partition = partition;
  pm.head_g0 = shared.network.head();
  pm.head_g1 = shared.network.head();

  const Eigen::MatrixXd features =
      train.empty() ? Eigen::MatrixXd(shared.network.shape().hidden, 0)
                    : Eigen::MatrixXd(nn::final_hidden(shared.network, shared.inputs(train)));
  const Eigen::RowVectorXd y = label_vector(train);

  for (const Group g : {Group::kG0, Group::kG1}) {
    const bool is_g0 = g == Group::kG0;
    Eigen::VectorXd& head = is_g0 ? pm.head_g0 : pm.head_g1;
    std::vector<Eigen::Index> members;
    for (std::size_t n = 0; n < train.size(); ++n) {
      if (partition.group_of(train[n].user_id) == g) members.push_back(static_cast<Eigen::Index>(n));
    }
    if (members.empty()) {
      (is_g0 ? pm.g0_kept_shared : pm.g1_kept_shared) = true;
      result.warnings.push_back(partition.label() + (is_g0 ? ": G0" : ": G1") +
                                " has no training windows; shared output layer kept");
      continue;
    }
    const Eigen::MatrixXd F = gather(features, members);
    const Eigen::RowVectorXd yg = gather_row(y, members);
    const Eigen::RowVectorXd wg = class_weights(yg, config.balance_classes);
    auto group_loss = [&](const Eigen::VectorXd& h) {
      return nn::mean_bce<double>(nn::head_logits<double>(F, h), yg, wg);
    };
    const double before = group_loss(head);
    double best = before;
    Eigen::VectorXd best_head = head;

    Rng rng(derive_seed(config.seed, is_g0 ? 10 : 11));
    Adam adam(head.size(), config.finetune_learning_rate);
    std::vector<Eigen::Index> order(members.size());
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const Eigen::Index H = F.rows();
    for (int epoch = 0; epoch < config.finetune_epochs; ++epoch) {
      rng.shuffle(order);
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
        const auto end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
        const std::span<const Eigen::Index> cols(order.data() + start, end - start);
        const Eigen::MatrixXd fb = gather(F, cols);
        const Eigen::RowVectorXd yb = gather_row(yg, cols);
        const Eigen::RowVectorXd wb = gather_row(wg, cols);
        const Eigen::RowVectorXd z = nn::head_logits<double>(fb, head);
        Eigen::RowVectorXd dz(z.size());
        const double norm = wb.size() ? wb.sum() : static_cast<double>(z.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) {
          const double w = wb.size() ? wb[i] : 1.0;
          dz[i] = w * (1.0 / (1.0 + std::exp(-z[i])) - yb[i]) / norm;
        }
        Eigen::VectorXd grad(H + 1);
        grad.head(H) = fb * dz.transpose();
        grad[H] = dz.sum();
        adam.update(head, grad);
      }
      const double loss = group_loss(head);
      check_finite(loss, config.finetune_learning_rate, "fine-tuning");
      if (loss < best) {
        best = loss;
        best_head = head;
      }
    }
    head = best_head;
    (is_g0 ? result.loss_before_g0 : result.loss_before_g1) = before;
    (is_g0 ? result.loss_after_g0 : result.loss_after_g1) = best;
  }
  return result;
}

Prediction predict(const PersonalizedModel& model, const LabeledWindow& window) {
  const auto p = predict_proba(model, std::span<const LabeledWindow>(&window, 1));
  return {p[0], hard_label(p[0]), !model.partition.group_of(window.user_id).has_value()};
}

std::vector<double> predict_proba(const PersonalizedModel& model,
                                  std::span<const LabeledWindow> windows) {
  if (windows.empty()) return {};
  const Eigen::MatrixXd hidden =
      nn::final_hidden(model.shared.network, model.shared.inputs(windows));
  std::vector<double> out(windows.size());
  for (std::size_t n = 0; n < windows.size(); ++n) {
    const Eigen::VectorXd head = model.head_for(model.partition.group_of(windows[n].user_id));
    out[n] = head_probability(hidden, static_cast<Eigen::Index>(n), head);
  }
  return out;
}

double gradient_check(const SequenceModel& model, const LabeledWindow& sample, double eps) {
  using LD = long double;
  const auto net = model.network.cast<LD>();
  const nn::Mat<LD> x = model.inputs(std::span<const LabeledWindow>(&sample, 1)).cast<LD>();
  nn::RowVec<LD> y(1);
  y[0] = sample.positive() ? 1.0L : 0.0L;
  nn::Vec<LD> analytic;
  nn::loss_and_gradient(net, x, y, analytic);
  const nn::Vec<LD> numeric = nn::numerical_gradient(net, x, y, static_cast<LD>(eps));
  return nn::max_relative_error(analytic, numeric);
}

json to_json(const SequenceModel& model) {
  return json{{"format", "fairaudit-sequence-model"},
              {"version", 1},
              {"tool_version", kToolVersion},
              {"config", model.config},
              {"standardizer",
               {{"mean", to_vector(model.standardizer.mean)},
                {"scale", to_vector(model.standardizer.scale)}}},
              {"parameters", to_vector(model.network.parameters())}};
}

SequenceModel sequence_model_from_json(const json& j) {
  try {
    if (j.at("format") != "fairaudit-sequence-model" || j.at("version") != 1) {
      throw ConfigError("not a version 1 sequence-model checkpoint");
    }
    SequenceModel m;
    m.config = j.at("config").get<ModelConfig>();
    m.network = nn::LstmNetwork<double>(shape_of(m.config));
    const auto T = static_cast<Eigen::Index>(m.config.input_length);
    m.standardizer.mean = from_vector(j.at("standardizer").at("mean"), T, "mean");
    m.standardizer.scale = from_vector(j.at("standardizer").at("scale"), T, "scale");
    m.network.parameters() =
        from_vector(j.at("parameters"), m.network.layout().size(), "parameters");
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

json to_json(const PersonalizedModel& model) {
  json attrs = json::array();
  for (auto a : model.partition.attributes) attrs.push_back(attribute_name(a));
  return json{{"format", "fairaudit-personalized-model"},
              {"version", 1},
              {"shared", to_json(model.shared)},
              {"head_g0", to_vector(model.head_g0)},
              {"head_g1", to_vector(model.head_g1)},
              {"g0_kept_shared", model.g0_kept_shared},
              {"g1_kept_shared", model.g1_kept_shared},
              {"partition",
               {{"attributes", attrs},
                {"strategy", strategy_name(model.partition.strategy)},
                {"g0_users", model.partition.g0_users},
                {"g1_users", model.partition.g1_users}}}};
}

PersonalizedModel personalized_model_from_json(const json& j) {
  try {
    if (j.at("format") != "fairaudit-personalized-model" || j.at("version") != 1) {
      throw ConfigError("not a version 1 personalized-model checkpoint");
    }
    PersonalizedModel m;
    m.shared = sequence_model_from_json(j.at("shared"));
    const auto n = static_cast<Eigen::Index>(m.shared.config.hidden + 1);
    m.head_g0 = from_vector(j.at("head_g0"), n, "head_g0");
    m.head_g1 = from_vector(j.at("head_g1"), n, "head_g1");
    m.g0_kept_shared = j.value("g0_kept_shared", false);
    m.g1_kept_shared = j.value("g1_kept_shared", false);
    const auto& p = j.at("partition");
    for (const auto& a : p.at("attributes")) {
      m.partition.attributes.push_back(parse_attribute(a.get<std::string>()));
    }
    const auto strategy = p.at("strategy").get<std::string>();
    bool found = false;
    for (auto s : {PartitionStrategy::kSingle, PartitionStrategy::kMinorityMinorityVsRest,
                   PartitionStrategy::kMajorityMajorityVsRest}) {
      if (strategy_name(s) == strategy) {
        m.partition.strategy = s;
        found = true;
      }
    }
    if (!found) throw ConfigError("unknown partition strategy '" + strategy + "'");
    for (const auto& u : p.at("g0_users")) m.partition.g0_users.insert(u.get<std::string>());
    for (const auto& u : p.at("g1_users")) m.partition.g1_users.insert(u.get<std::string>());
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_json(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace fairaudit
