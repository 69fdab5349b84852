#pragma once

// Stacked LSTM over a univariate sequence with a single logistic output unit.
// All parameters live in one flat vector; the accessors below are Eigen::Map
// views into it, so optimizers and freezing operate on contiguous segments.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace fairaudit::nn {

using Eigen::Index;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

struct NetworkShape {
  Index input_length = 48;  // time steps, one scalar feature each
  Index hidden = 32;
  Index layers = 3;

  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

// Offsets of every block inside the flat parameter vector. Gate rows are
// ordered input, forget, candidate, output.
class ParameterLayout {
 public:
  explicit ParameterLayout(const NetworkShape& shape) : shape_(shape) {
    if (shape.hidden <= 0 || shape.layers <= 0 || shape.input_length <= 0) {
      throw std::invalid_argument("network shape must be positive");
    }
    Index offset = 0;
    for (Index l = 0; l < shape.layers; ++l) {
      const Index in = l == 0 ? 1 : shape.hidden;
      layer_offsets_.push_back(offset);
      offset += gates() * in + gates() * shape.hidden + gates();
    }
    head_offset_ = offset;
    size_ = offset + shape.hidden + 1;
  }

  const NetworkShape& shape() const { return shape_; }
  Index gates() const { return 4 * shape_.hidden; }
  Index input_dim(Index layer) const { return layer == 0 ? 1 : shape_.hidden; }

  Index input_weights(Index layer) const { return layer_offsets_[layer]; }
  Index recurrent_weights(Index layer) const {
    return input_weights(layer) + gates() * input_dim(layer);
  }
  Index bias(Index layer) const {
    return recurrent_weights(layer) + gates() * shape_.hidden;
  }
  // Recurrent layers occupy [0, head_offset()); the output layer follows.
  Index head_offset() const { return head_offset_; }
  Index head_bias() const { return head_offset_ + shape_.hidden; }
  Index size() const { return size_; }

 private:
  NetworkShape shape_;
  std::vector<Index> layer_offsets_;
  Index head_offset_ = 0;
  Index size_ = 0;
};

template <typename Scalar>
class LstmNetwork {
 public:
  using MatMap = Eigen::Map<Mat<Scalar>>;
  using ConstMatMap = Eigen::Map<const Mat<Scalar>>;
  using VecMap = Eigen::Map<Vec<Scalar>>;
  using ConstVecMap = Eigen::Map<const Vec<Scalar>>;

  explicit LstmNetwork(const NetworkShape& shape)
      : layout_(shape), params_(Vec<Scalar>::Zero(layout_.size())) {}

  const NetworkShape& shape() const { return layout_.shape(); }
  const ParameterLayout& layout() const { return layout_; }

  Vec<Scalar>& parameters() { return params_; }
  const Vec<Scalar>& parameters() const { return params_; }

  ConstMatMap input_weights(Index l) const {
    return {params_.data() + layout_.input_weights(l), layout_.gates(), layout_.input_dim(l)};
  }
  MatMap input_weights(Index l) {
    return {params_.data() + layout_.input_weights(l), layout_.gates(), layout_.input_dim(l)};
  }
  ConstMatMap recurrent_weights(Index l) const {
    return {params_.data() + layout_.recurrent_weights(l), layout_.gates(), shape().hidden};
  }
  MatMap recurrent_weights(Index l) {
    return {params_.data() + layout_.recurrent_weights(l), layout_.gates(), shape().hidden};
  }
  ConstVecMap bias(Index l) const {
    return {params_.data() + layout_.bias(l), layout_.gates()};
  }
  VecMap bias(Index l) {
    return {params_.data() + layout_.bias(l), layout_.gates()};
  }
  ConstVecMap head_weights() const {
    return {params_.data() + layout_.head_offset(), shape().hidden};
  }
  VecMap head_weights() { return {params_.data() + layout_.head_offset(), shape().hidden}; }
  Scalar head_bias() const { return params_[layout_.head_bias()]; }
  Scalar& head_bias() { return params_[layout_.head_bias()]; }

  // Head segment [w; b] of length hidden + 1.
  auto head() const { return params_.segment(layout_.head_offset(), shape().hidden + 1); }
  auto head() { return params_.segment(layout_.head_offset(), shape().hidden + 1); }
  auto trunk() const { return params_.head(layout_.head_offset()); }

  template <typename Other>
  LstmNetwork<Other> cast() const {
    LstmNetwork<Other> out(shape());
    out.parameters() = params_.template cast<Other>();
    return out;
  }

 private:
  ParameterLayout layout_;
  Vec<Scalar> params_;
};

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return (Scalar(1) + (-x).exp()).inverse();
}

// Inverted dropout masks, already scaled by 1 / (1 - rate). `between[l]`
// multiplies the output of layer l before layer l + 1 sees it (same mask at
// every time step); `top` multiplies the final hidden state before the head.
template <typename Scalar>
struct DropoutMasks {
  std::vector<Mat<Scalar>> between;
  Mat<Scalar> top;

  bool empty() const { return top.size() == 0; }
};

template <typename Scalar>
struct ForwardCache {
  Mat<Scalar> inputs;                                 // T x B
  std::vector<std::vector<Mat<Scalar>>> gates;        // [layer][t] 4H x B
  std::vector<std::vector<Mat<Scalar>>> cells;        // [layer][t] H x B
  std::vector<std::vector<Mat<Scalar>>> hidden;       // [layer][t] H x B
  Mat<Scalar> top;                                    // H x B after dropout
};

// Final hidden state of the last layer (no dropout), H x B. `inputs` is T x B.
template <typename Scalar, typename Derived>
Mat<Scalar> final_hidden(const LstmNetwork<Scalar>& net,
                         const Eigen::MatrixBase<Derived>& inputs,
                         const DropoutMasks<Scalar>* masks = nullptr,
                         ForwardCache<Scalar>* cache = nullptr) {
  const auto& shape = net.shape();
  const Index H = shape.hidden;
  const Index L = shape.layers;
  const Index T = inputs.rows();
  const Index B = inputs.cols();
  if (T != shape.input_length) {
    throw std::invalid_argument("input length does not match network shape");
  }

  std::vector<Mat<Scalar>> h(L, Mat<Scalar>::Zero(H, B));
  std::vector<Mat<Scalar>> c(L, Mat<Scalar>::Zero(H, B));
  if (cache) {
    cache->inputs = inputs;
    cache->gates.assign(L, std::vector<Mat<Scalar>>(T));
    cache->cells.assign(L, std::vector<Mat<Scalar>>(T));
    cache->hidden.assign(L, std::vector<Mat<Scalar>>(T));
  }

  Mat<Scalar> a(4 * H, B);
  Mat<Scalar> x;
  for (Index t = 0; t < T; ++t) {
    for (Index l = 0; l < L; ++l) {
      if (l == 0) {
        x = inputs.row(t);
      } else if (masks && !masks->empty()) {
        x = h[l - 1].cwiseProduct(masks->between[l - 1]);
      } else {
        x = h[l - 1];
      }
      a.noalias() = net.input_weights(l) * x;
      a.noalias() += net.recurrent_weights(l) * h[l];
      a.colwise() += net.bias(l);

      a.topRows(H) = sigmoid(a.topRows(H).array()).matrix();
      a.middleRows(H, H) = sigmoid(a.middleRows(H, H).array()).matrix();
      a.middleRows(2 * H, H) = a.middleRows(2 * H, H).array().tanh().matrix();
      a.bottomRows(H) = sigmoid(a.bottomRows(H).array()).matrix();

      c[l] = a.middleRows(H, H).cwiseProduct(c[l]) +
             a.topRows(H).cwiseProduct(a.middleRows(2 * H, H));
      h[l] = a.bottomRows(H).cwiseProduct(c[l].array().tanh().matrix());
      if (cache) {
        cache->gates[l][t] = a;
        cache->cells[l][t] = c[l];
        cache->hidden[l][t] = h[l];
      }
    }
  }
  Mat<Scalar> top = h[L - 1];
  if (masks && !masks->empty()) top = top.cwiseProduct(masks->top);
  if (cache) cache->top = top;
  return top;
}

template <typename Scalar, typename Derived>
RowVec<Scalar> head_logits(const Eigen::MatrixBase<Derived>& hidden,
                           const Eigen::Ref<const Vec<Scalar>>& head) {
  const Index H = hidden.rows();
  RowVec<Scalar> z = head.head(H).transpose() * hidden;
  z.array() += head[H];
  return z;
}

template <typename Scalar, typename Derived>
RowVec<Scalar> logits(const LstmNetwork<Scalar>& net,
                      const Eigen::MatrixBase<Derived>& inputs,
                      const DropoutMasks<Scalar>* masks = nullptr,
                      ForwardCache<Scalar>* cache = nullptr) {
  const Mat<Scalar> top = final_hidden(net, inputs, masks, cache);
  return head_logits<Scalar>(top, net.head());
}

// Per-sample binary cross-entropy from logits, numerically stable.
template <typename Scalar>
Scalar bce_from_logit(Scalar z, Scalar y) {
  using std::abs;
  using std::exp;
  using std::log1p;
  return std::max(z, Scalar(0)) - y * z + log1p(exp(-abs(z)));
}

// Weighted mean BCE; `weights` may be empty (all ones).
template <typename Scalar>
Scalar mean_bce(const RowVec<Scalar>& z, const RowVec<Scalar>& y,
                const RowVec<Scalar>& weights = {}) {
  Scalar total(0);
  Scalar norm(0);
  for (Index i = 0; i < z.size(); ++i) {
    const Scalar w = weights.size() ? weights[i] : Scalar(1);
    total += w * bce_from_logit(z[i], y[i]);
    norm += w;
  }
  return norm > Scalar(0) ? total / norm : Scalar(0);
}

// Gradient of the loss with respect to every parameter, given dL/dz for each
// sample in the batch of the cached forward pass.
template <typename Scalar>
Vec<Scalar> backward(const LstmNetwork<Scalar>& net, const ForwardCache<Scalar>& cache,
                     const RowVec<Scalar>& dlogits,
                     const DropoutMasks<Scalar>* masks = nullptr) {
  const auto& layout = net.layout();
  const Index H = net.shape().hidden;
  const Index L = net.shape().layers;
  const Index T = cache.inputs.rows();
  const Index B = cache.inputs.cols();
  const bool dropout = masks && !masks->empty();

  Vec<Scalar> grad = Vec<Scalar>::Zero(layout.size());
  Eigen::Map<Vec<Scalar>>(grad.data() + layout.head_offset(), H) =
      cache.top * dlogits.transpose();
  grad[layout.head_bias()] = dlogits.sum();

  // dL/dh at the top of the last layer, final step.
  Mat<Scalar> d_top = net.head_weights() * dlogits;
  if (dropout) d_top = d_top.cwiseProduct(masks->top);

  std::vector<Mat<Scalar>> dh_next(L, Mat<Scalar>::Zero(H, B));
  std::vector<Mat<Scalar>> dc_next(L, Mat<Scalar>::Zero(H, B));
  Mat<Scalar> from_above;  // dL/d(input of layer l+1) routed to layer l
  Mat<Scalar> da(4 * H, B);
  Mat<Scalar> dh, dc, tanh_c, x;

  for (Index t = T - 1; t >= 0; --t) {
    for (Index l = L - 1; l >= 0; --l) {
      const auto& gates = cache.gates[l][t];
      const auto i = gates.topRows(H).array();
      const auto f = gates.middleRows(H, H).array();
      const auto g = gates.middleRows(2 * H, H).array();
      const auto o = gates.bottomRows(H).array();

      dh = dh_next[l];
      if (l == L - 1) {
        if (t == T - 1) dh += d_top;
      } else {
        dh += from_above;
      }

      tanh_c = cache.cells[l][t].array().tanh().matrix();
      const auto c_prev = t > 0 ? Mat<Scalar>(cache.cells[l][t - 1])
                                : Mat<Scalar>(Mat<Scalar>::Zero(H, B));
      dc = dc_next[l].array() +
           dh.array() * o * (Scalar(1) - tanh_c.array().square());

      da.topRows(H) = (dc.array() * g * i * (Scalar(1) - i)).matrix();
      da.middleRows(H, H) = (dc.array() * c_prev.array() * f * (Scalar(1) - f)).matrix();
      da.middleRows(2 * H, H) = (dc.array() * i * (Scalar(1) - g.square())).matrix();
      da.bottomRows(H) = (dh.array() * tanh_c.array() * o * (Scalar(1) - o)).matrix();

      if (l == 0) {
        x = cache.inputs.row(t);
      } else if (dropout) {
        x = cache.hidden[l - 1][t].cwiseProduct(masks->between[l - 1]);
      } else {
        x = cache.hidden[l - 1][t];
      }
      Eigen::Map<Mat<Scalar>>(grad.data() + layout.input_weights(l), 4 * H,
                              layout.input_dim(l))
          .noalias() += da * x.transpose();
      if (t > 0) {
        Eigen::Map<Mat<Scalar>>(grad.data() + layout.recurrent_weights(l), 4 * H, H)
            .noalias() += da * cache.hidden[l][t - 1].transpose();
      }
      Eigen::Map<Vec<Scalar>>(grad.data() + layout.bias(l), 4 * H) += da.rowwise().sum();

      dh_next[l].noalias() = net.recurrent_weights(l).transpose() * da;
      dc_next[l] = dc.cwiseProduct(gates.middleRows(H, H));
      if (l > 0) {
        from_above.noalias() = net.input_weights(l).transpose() * da;
        if (dropout) from_above = from_above.cwiseProduct(masks->between[l - 1]);
      }
    }
  }
  return grad;
}

// Mean-BCE loss and its gradient on one batch.
template <typename Scalar, typename Derived>
Scalar loss_and_gradient(const LstmNetwork<Scalar>& net,
                         const Eigen::MatrixBase<Derived>& inputs,
                         const RowVec<Scalar>& targets, Vec<Scalar>& grad,
                         const DropoutMasks<Scalar>* masks = nullptr,
                         const RowVec<Scalar>& weights = {}) {
  ForwardCache<Scalar> cache;
  const RowVec<Scalar> z = logits(net, inputs, masks, &cache);
  RowVec<Scalar> dz(z.size());
  Scalar norm(0);
  for (Index i = 0; i < z.size(); ++i) norm += weights.size() ? weights[i] : Scalar(1);
  for (Index i = 0; i < z.size(); ++i) {
    const Scalar w = weights.size() ? weights[i] : Scalar(1);
    const Scalar p = Scalar(1) / (Scalar(1) + std::exp(-z[i]));
    dz[i] = w * (p - targets[i]) / norm;
  }
  grad = backward(net, cache, dz, masks);
  return mean_bce(z, targets, weights);
}

// Central finite differences of the mean-BCE loss for every parameter.
template <typename Scalar, typename Derived>
Vec<Scalar> numerical_gradient(const LstmNetwork<Scalar>& net,
                               const Eigen::MatrixBase<Derived>& inputs,
                               const RowVec<Scalar>& targets, Scalar eps) {
  LstmNetwork<Scalar> probe = net;
  Vec<Scalar> out(net.parameters().size());
  for (Index k = 0; k < out.size(); ++k) {
    const Scalar saved = probe.parameters()[k];
    probe.parameters()[k] = saved + eps;
    const Scalar plus = mean_bce(logits(probe, inputs), targets);
    probe.parameters()[k] = saved - eps;
    const Scalar minus = mean_bce(logits(probe, inputs), targets);
    probe.parameters()[k] = saved;
    out[k] = (plus - minus) / (Scalar(2) * eps);
  }
  return out;
}

// max_k |a_k - n_k| / max(|a_k|, |n_k|, 1e-8)
template <typename Scalar>
double max_relative_error(const Vec<Scalar>& analytic, const Vec<Scalar>& numeric) {
  double worst = 0.0;
  for (Index k = 0; k < analytic.size(); ++k) {
    const double a = static_cast<double>(analytic[k]);
    const double n = static_cast<double>(numeric[k]);
    const double denom = std::max({std::abs(a), std::abs(n), 1e-8});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

}  // namespace fairaudit::nn
