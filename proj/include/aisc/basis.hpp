#ifndef AISC_BASIS_HPP
#define AISC_BASIS_HPP

// Models of the form f(x) = sum_i phi_i(x) * head_i with a frozen basis Phi.
// A base model carries head = w; fine-tuning relearns only the head (r).

#include <Eigen/Dense>
#include <concepts>
#include <cstdint>

#include "aisc/errors.hpp"
#include "aisc/mlp.hpp"
#include "aisc/rng.hpp"

namespace aisc {

/// A frozen family of basis functions R^dim -> R^count, evaluated row-wise.
template <class B>
concept BasisFamily = requires(const B& b, const Eigen::MatrixXd& x) {
  { b.evaluate(x) } -> std::convertible_to<Eigen::MatrixXd>;
  { b.count() } -> std::convertible_to<int>;
  { b.input_dim() } -> std::convertible_to<int>;
};

/// phi_i(x) = tanh(a_i . x + c_i).
struct TanhBasis {
  Eigen::MatrixXd slopes;   // count x dim
  Eigen::VectorXd offsets;  // count

  static TanhBasis draw(int count, int dim, Rng& rng, double scale = 1.0) {
    if (count < 1 || dim < 1) throw ArgumentError("basis needs count >= 1 and dim >= 1");
    TanhBasis b{Eigen::MatrixXd(count, dim), Eigen::VectorXd(count)};
    for (int i = 0; i < count; ++i) {
      for (int j = 0; j < dim; ++j) b.slopes(i, j) = scale * normal01(rng);
      b.offsets(i) = uniform(rng, -1, 1);
    }
    return b;
  }

  int count() const { return static_cast<int>(slopes.rows()); }
  int input_dim() const { return static_cast<int>(slopes.cols()); }

  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd z = (x * slopes.transpose()).rowwise() + offsets.transpose();
    return z.array().tanh().matrix();
  }
};

/// The last hidden layer of a trained MLP viewed as a basis family.
struct MlpEmbedding {
  const MlpModel* model = nullptr;

  int count() const { return model->widths()[model->widths().size() - 2]; }
  int input_dim() const { return model->input_dim(); }
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& x) const { return model->embed(x); }
};

template <BasisFamily B>
struct BasisModel {
  B basis;
  Eigen::VectorXd head;

  void validate() const {
    if (basis.count() < 1) throw ArgumentError("basis model needs at least one basis function");
    if (head.size() != basis.count()) throw ArgumentError("head length does not match basis count");
  }

  Eigen::VectorXd evaluate(const Eigen::MatrixXd& x) const {
    validate();
    if (x.cols() != basis.input_dim()) throw ArgumentError("input dimension does not match basis");
    return basis.evaluate(x) * head;
  }
};

/// sum_i phi_i(x) * head_i at a single point.
template <BasisFamily B>
double eval_basis(const BasisModel<B>& model, const Eigen::VectorXd& x) {
  if (x.size() != model.basis.input_dim()) throw ArgumentError("input dimension does not match basis");
  return model.evaluate(x.transpose())(0);
}

}  // namespace aisc

#endif  // AISC_BASIS_HPP
