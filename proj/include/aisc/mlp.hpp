#ifndef AISC_MLP_HPP
#define AISC_MLP_HPP

// Small fully connected binary classifier: [Linear -> ReLU -> BatchNorm]*
// followed by Linear -> sigmoid. Trained with Adam on binary cross-entropy,
// optionally plus a caller-supplied differentiable penalty on the scores.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aisc/errors.hpp"
#include "aisc/rng.hpp"
#include "json.hpp"

namespace aisc {

/// Logistic function, clamped so the result stays strictly inside (0, 1).
inline double sigmoid(double t) {
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  double s;
  if (t >= 0) {
    s = 1.0 / (1.0 + std::exp(-t));
  } else {
    const double e = std::exp(t);
    s = e / (1.0 + e);
  }
  return std::clamp(s, lo, hi);
}

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

struct BatchNormState {
  Eigen::VectorXd scale;
  Eigen::VectorXd shift;
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over a fixed list of parameter tensors viewed as flat arrays.
class Adam {
 public:
  Adam(std::vector<std::size_t> sizes, AdamOptions opt) : opt_(opt) {
    for (auto n : sizes) {
      m_.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)));
      v_.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)));
    }
  }

  void begin_step() { ++t_; }

  void update(std::size_t slot, double* param, const double* grad) {
    auto& m = m_[slot];
    auto& v = v_[slot];
    Eigen::Map<Eigen::VectorXd> p(param, m.size());
    Eigen::Map<const Eigen::VectorXd> g(grad, m.size());
    m = opt_.beta1 * m + (1 - opt_.beta1) * g;
    v = opt_.beta2 * v + (1 - opt_.beta2) * g.cwiseProduct(g);
    const double c1 = 1 - std::pow(opt_.beta1, t_);
    const double c2 = 1 - std::pow(opt_.beta2, t_);
    p.array() -= opt_.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + opt_.eps);
  }

 private:
  AdamOptions opt_;
  std::vector<Eigen::VectorXd> m_, v_;
  int t_ = 0;
};

/// Extra loss term on a mini-batch. Receives the batch scores and the dataset
/// row index of each score; returns the penalty value and writes dPenalty/dScore.
using ScorePenalty =
    std::function<double(const Eigen::VectorXd& scores, std::span<const int> rows, Eigen::VectorXd& grad)>;

struct TrainOptions {
  int epochs = 1;
  int batch_size = 32;
  AdamOptions adam;
  std::uint64_t seed = 0;
  ScorePenalty penalty;  // may be empty
  double penalty_weight = 0.0;
};

struct TrainTrace {
  std::vector<double> epoch_loss;  // mean total loss per epoch
  std::vector<double> epoch_bce;   // mean BCE per epoch
};

class MlpModel {
 public:
  static constexpr double kBatchNormEps = 1e-5;
  static constexpr double kBatchNormMomentum = 0.1;

  MlpModel() = default;

  /// widths = {input, hidden..., 1}. Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static MlpModel create(std::vector<int> widths, bool batch_norm, std::uint64_t seed) {
    if (widths.size() < 2) throw ArgumentError("an MLP needs at least input and output widths");
    for (int w : widths)
      if (w < 1) throw ArgumentError("layer widths must be positive");
    if (widths.back() != 1) throw ArgumentError("output width must be 1");
    MlpModel m;
    m.widths_ = std::move(widths);
    m.batch_norm_ = batch_norm;
    Rng rng = make_rng(seed);
    for (std::size_t l = 0; l + 1 < m.widths_.size(); ++l) {
      const int in = m.widths_[l], out = m.widths_[l + 1];
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
      for (int r = 0; r < out; ++r)
        for (int c = 0; c < in; ++c) layer.weight(r, c) = uniform(rng, -bound, bound);
      for (int r = 0; r < out; ++r) layer.bias(r) = uniform(rng, -bound, bound);
      m.layers_.push_back(std::move(layer));
      if (batch_norm && l + 2 < m.widths_.size())
        m.norms_.push_back({Eigen::VectorXd::Ones(out), Eigen::VectorXd::Zero(out), Eigen::VectorXd::Zero(out),
                            Eigen::VectorXd::Ones(out)});
    }
    return m;
  }

  int input_dim() const { return widths_.front(); }
  int hidden_layers() const { return static_cast<int>(layers_.size()) - 1; }
  const std::vector<int>& widths() const { return widths_; }
  bool batch_norm() const { return batch_norm_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  std::vector<BatchNormState>& norms() { return norms_; }
  const std::vector<BatchNormState>& norms() const { return norms_; }

  /// Activations of the last hidden layer (evaluation mode). Rows are samples.
  Eigen::MatrixXd embed(const Eigen::MatrixXd& x) const {
    check_input(x);
    Eigen::MatrixXd a = x;
    for (int l = 0; l < hidden_layers(); ++l) {
      Eigen::MatrixXd z = (a * layers_[l].weight.transpose()).rowwise() + layers_[l].bias.transpose();
      a = z.cwiseMax(0.0);
      if (batch_norm_) {
        const auto& bn = norms_[l];
        Eigen::RowVectorXd inv = (bn.running_var.array() + kBatchNormEps).rsqrt().matrix().transpose();
        a = ((a.rowwise() - bn.running_mean.transpose()).array().rowwise() * (inv.array() * bn.scale.transpose().array()))
                .matrix()
                .rowwise() +
            bn.shift.transpose();
      }
    }
    return a;
  }

  /// Pre-sigmoid outputs (evaluation mode).
  Eigen::VectorXd logits(const Eigen::MatrixXd& x) const {
    const auto& head = layers_.back();
    return (embed(x) * head.weight.transpose()).col(0).array() + head.bias(0);
  }

  /// Scores in (0,1), one per row. Pure: batch-norm uses running statistics.
  Eigen::VectorXd forward(const Eigen::MatrixXd& x) const {
    Eigen::VectorXd out = logits(x);
    for (auto& v : out) v = sigmoid(v);
    return out;
  }

  double forward_one(const Eigen::VectorXd& x) const { return forward(x.transpose())(0); }

  /// Mini-batch Adam on BCE (+ penalty_weight * penalty). Labels must be 0/1.
  TrainTrace train(const Eigen::MatrixXd& x, std::span<const int> labels, const TrainOptions& opt) {
    check_input(x);
    if (static_cast<Eigen::Index>(labels.size()) != x.rows())
      throw ArgumentError("label count does not match feature rows");
    if (opt.batch_size < 1 || opt.epochs < 0) throw ArgumentError("invalid batch size or epoch count");

    std::vector<std::size_t> sizes;
    for (const auto& l : layers_) {
      sizes.push_back(static_cast<std::size_t>(l.weight.size()));
      sizes.push_back(static_cast<std::size_t>(l.bias.size()));
    }
    for (const auto& bn : norms_) {
      sizes.push_back(static_cast<std::size_t>(bn.scale.size()));
      sizes.push_back(static_cast<std::size_t>(bn.shift.size()));
    }
    Adam adam(sizes, opt.adam);

    const int n = static_cast<int>(x.rows());
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    Rng rng = make_rng(opt.seed);
    TrainTrace trace;

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
      for (int i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng() % static_cast<std::uint64_t>(i)]);
      double loss_sum = 0, bce_sum = 0;
      for (int start = 0; start < n; start += opt.batch_size) {
        const int b = std::min(opt.batch_size, n - start);
        std::span<const int> rows(perm.data() + start, static_cast<std::size_t>(b));
        Eigen::MatrixXd xb(b, x.cols());
        Eigen::VectorXd yb(b);
        for (int i = 0; i < b; ++i) {
          xb.row(i) = x.row(rows[i]);
          yb(i) = labels[rows[i]];
        }
        auto [bce, total] = step(xb, yb, rows, opt, adam);
        bce_sum += bce * b;
        loss_sum += total * b;
      }
      if (!std::isfinite(loss_sum)) throw TrainingError("training loss is not finite at epoch " + std::to_string(epoch));
      trace.epoch_loss.push_back(loss_sum / n);
      trace.epoch_bce.push_back(bce_sum / n);
    }
    return trace;
  }

  nlohmann::json to_json() const {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : layers_) {
      nlohmann::json w = nlohmann::json::array();
      for (int r = 0; r < l.weight.rows(); ++r) w.push_back(std::vector<double>(l.weight.row(r).begin(), l.weight.row(r).end()));
      layers.push_back({{"weight", w}, {"bias", std::vector<double>(l.bias.begin(), l.bias.end())}});
    }
    nlohmann::json norms = nlohmann::json::array();
    for (const auto& bn : norms_) {
      auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.begin(), v.end()); };
      norms.push_back({{"scale", vec(bn.scale)},
                       {"shift", vec(bn.shift)},
                       {"running_mean", vec(bn.running_mean)},
                       {"running_var", vec(bn.running_var)}});
    }
    return {{"format", "aisc-mlp"}, {"version", 1},         {"widths", widths_},
            {"batch_norm", batch_norm_}, {"layers", layers}, {"norms", norms}};
  }

  static MlpModel from_json(const nlohmann::json& j) {
    try {
      if (j.at("format") != "aisc-mlp") throw ParseError("not an aisc-mlp checkpoint");
      if (j.at("version").get<int>() != 1) throw ParseError("unsupported checkpoint version");
      MlpModel m;
      m.widths_ = j.at("widths").get<std::vector<int>>();
      m.batch_norm_ = j.at("batch_norm").get<bool>();
      auto vec = [](const nlohmann::json& a) {
        auto v = a.get<std::vector<double>>();
        return Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
      };
      const auto& layers = j.at("layers");
      if (layers.size() + 1 != m.widths_.size()) throw ParseError("layer count does not match widths");
      for (std::size_t l = 0; l < layers.size(); ++l) {
        const int in = m.widths_[l], out = m.widths_[l + 1];
        DenseLayer d{Eigen::MatrixXd(out, in), vec(layers[l].at("bias"))};
        const auto& w = layers[l].at("weight");
        if (static_cast<int>(w.size()) != out || d.bias.size() != out) throw ParseError("layer shape mismatch");
        for (int r = 0; r < out; ++r) {
          if (static_cast<int>(w[r].size()) != in) throw ParseError("layer shape mismatch");
          for (int c = 0; c < in; ++c) d.weight(r, c) = w[r][c].get<double>();
        }
        m.layers_.push_back(std::move(d));
      }
      for (const auto& bn : j.at("norms"))
        m.norms_.push_back({vec(bn.at("scale")), vec(bn.at("shift")), vec(bn.at("running_mean")),
                            vec(bn.at("running_var"))});
      if (m.batch_norm_ && static_cast<int>(m.norms_.size()) != m.hidden_layers())
        throw ParseError("batch-norm state count does not match hidden layers");
      for (const auto& bn : m.norms_)
        if ((bn.running_var.array() <= 0).any()) throw ParseError("running variance must be positive");
      return m;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed checkpoint: ") + e.what());
    }
  }

 private:
  void check_input(const Eigen::MatrixXd& x) const {
    if (x.cols() != input_dim())
      throw ArgumentError("input has " + std::to_string(x.cols()) + " columns, model expects " +
                          std::to_string(input_dim()));
  }

  // One optimizer step on a batch; returns {bce, bce + weighted penalty}.
  std::pair<double, double> step(const Eigen::MatrixXd& xb, const Eigen::VectorXd& yb, std::span<const int> rows,
                                 const TrainOptions& opt, Adam& adam) {
    MlpGradients g = backprop(xb, yb, rows, opt, &norms_);
    adam.begin_step();
    std::size_t slot = 0;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      adam.update(slot++, layers_[l].weight.data(), g.weight[l].data());
      adam.update(slot++, layers_[l].bias.data(), g.bias[l].data());
    }
    for (std::size_t k = 0; k < norms_.size(); ++k) {
      adam.update(slot++, norms_[k].scale.data(), g.scale[k].data());
      adam.update(slot++, norms_[k].shift.data(), g.shift[k].data());
    }
    return {g.bce, g.loss};
  }

 public:
  struct MlpGradients {
    double bce = 0;
    double loss = 0;
    std::vector<Eigen::MatrixXd> weight;
    std::vector<Eigen::VectorXd> bias;
    std::vector<Eigen::VectorXd> scale, shift;
  };

  /// Training-mode loss and parameter gradients on one batch (batch-norm uses
  /// batch statistics). Running statistics are updated only through `running`.
  MlpGradients backprop(const Eigen::MatrixXd& xb, const Eigen::VectorXd& yb, std::span<const int> rows,
                        const TrainOptions& opt, std::vector<BatchNormState>* running = nullptr) const {
    const int b = static_cast<int>(xb.rows());
    const int hidden = hidden_layers();
    std::vector<Eigen::MatrixXd> inputs(layers_.size());  // input to each dense layer
    std::vector<Eigen::MatrixXd> pre(hidden);             // pre-ReLU
    std::vector<Eigen::MatrixXd> xhat(hidden);
    std::vector<Eigen::RowVectorXd> inv_std(hidden);

    Eigen::MatrixXd a = xb;
    for (int l = 0; l < hidden; ++l) {
      inputs[l] = a;
      pre[l] = (a * layers_[l].weight.transpose()).rowwise() + layers_[l].bias.transpose();
      a = pre[l].cwiseMax(0.0);
      if (batch_norm_) {
        const auto& bn = norms_[l];
        Eigen::RowVectorXd mean = a.colwise().mean();
        Eigen::MatrixXd centered = a.rowwise() - mean;
        Eigen::RowVectorXd var = centered.array().square().colwise().mean();
        inv_std[l] = (var.array() + kBatchNormEps).rsqrt();
        xhat[l] = (centered.array().rowwise() * inv_std[l].array()).matrix();
        a = (xhat[l].array().rowwise() * bn.scale.transpose().array()).matrix().rowwise() + bn.shift.transpose();
        if (running) {
          auto& rs = (*running)[l];
          const double unbias = b > 1 ? static_cast<double>(b) / (b - 1) : 1.0;
          rs.running_mean = (1 - kBatchNormMomentum) * rs.running_mean + kBatchNormMomentum * mean.transpose();
          rs.running_var = (1 - kBatchNormMomentum) * rs.running_var + kBatchNormMomentum * unbias * var.transpose();
        }
      }
    }
    inputs[hidden] = a;
    const auto& head = layers_.back();
    Eigen::VectorXd logit = (a * head.weight.transpose()).col(0).array() + head.bias(0);
    Eigen::VectorXd p(b);
    MlpGradients g;
    for (int i = 0; i < b; ++i) {
      p(i) = sigmoid(logit(i));
      // log(1 + e^t) - y t, stable form
      const double t = logit(i);
      g.bce += std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))) - yb(i) * t;
    }
    g.bce /= b;
    g.loss = g.bce;

    Eigen::VectorXd dlogit = (p - yb) / b;
    if (opt.penalty && opt.penalty_weight != 0.0) {
      Eigen::VectorXd dpen = Eigen::VectorXd::Zero(b);
      const double pen = opt.penalty(p, rows, dpen);
      g.loss += opt.penalty_weight * pen;
      dlogit.array() += opt.penalty_weight * dpen.array() * p.array() * (1 - p.array());
    }

    g.weight.resize(layers_.size());
    g.bias.resize(layers_.size());
    g.scale.resize(norms_.size());
    g.shift.resize(norms_.size());
    Eigen::MatrixXd delta = dlogit;  // gradient wrt the current layer's output
    for (int l = hidden; l >= 0; --l) {
      g.weight[l] = delta.transpose() * inputs[l];
      g.bias[l] = delta.colwise().sum().transpose();
      if (l == 0) break;
      Eigen::MatrixXd da = delta * layers_[l].weight;
      const int k = l - 1;
      if (batch_norm_) {
        const auto& bn = norms_[k];
        g.scale[k] = (da.array() * xhat[k].array()).colwise().sum().transpose();
        g.shift[k] = da.colwise().sum().transpose();
        Eigen::MatrixXd dxh = (da.array().rowwise() * bn.scale.transpose().array()).matrix();
        Eigen::RowVectorXd sum_d = dxh.colwise().sum();
        Eigen::RowVectorXd sum_dx = (dxh.array() * xhat[k].array()).colwise().sum();
        da = ((b * dxh).rowwise() - sum_d).array() - xhat[k].array().rowwise() * sum_dx.array();
        da = (da.array().rowwise() * (inv_std[k].array() / b)).matrix();
      }
      delta = (pre[k].array() > 0).select(da, 0.0);
    }
    return g;
  }

 private:
  std::vector<int> widths_;
  bool batch_norm_ = false;
  std::vector<DenseLayer> layers_;
  std::vector<BatchNormState> norms_;
};

}  // namespace aisc

#endif  // AISC_MLP_HPP
