#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "buglistener/common.hpp"

namespace bl::nn {

using Mat = Eigen::MatrixXd;

// Dynamically built reverse-mode autodiff over dense double matrices.
// Forward passes build a tape of shared nodes; backward(root) walks it in
// reverse topological order and accumulates into .grad. Subgraphs whose
// inputs all have requires_grad == false collapse into constants, so frozen
// model parts cost no tape memory.
struct Node {
  Mat value;
  Mat grad;
  bool requires_grad = false;
  bool grad_alloc = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (!grad_alloc) {
      grad = Mat::Zero(value.rows(), value.cols());
      grad_alloc = true;
    }
  }
};

class Var {
 public:
  Var() = default;
  static Var constant(Mat v);
  static Var param(Mat v);

  const Mat& value() const { return n_->value; }
  Mat& value_mut() { return n_->value; }
  Mat& grad() {
    n_->ensure_grad();
    return n_->grad;
  }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  // used for layer freezing; affects tapes built after the call
  void set_requires_grad(bool v) {
    if (n_) n_->requires_grad = v;
  }
  void zero_grad() {
    if (n_) {
      n_->ensure_grad();
      n_->grad.setZero();
    }
  }
  long rows() const { return n_->value.rows(); }
  long cols() const { return n_->value.cols(); }
  std::shared_ptr<Node> node() const { return n_; }
  explicit operator bool() const { return static_cast<bool>(n_); }

  explicit Var(std::shared_ptr<Node> n) : n_(std::move(n)) {}

 private:
  std::shared_ptr<Node> n_;
};

// Seeds root (1x1) with gradient 1 and propagates.
void backward(const Var& root);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var mul_scalar(const Var& a, double s);
Var add_rowvec(const Var& a, const Var& row);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

Var relu(const Var& a);
Var softsign(const Var& a);
Var sigmoid(const Var& a);
Var gelu(const Var& a);
Var log_clamped(const Var& a, double floor);
Var pow_scalar(const Var& a, double p);

Var row_softmax(const Var& a);
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var sum_rows(const Var& a);  // 1 x cols, sums over rows
Var max_rows(const Var& a);  // 1 x cols, columnwise max
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(const Var& a, long start, long n);
Var slice_rows(const Var& a, long start, long n);
Var pick(const Var& a, long r, long c);

Var dropout(const Var& a, double p, Rng& rng, bool training);

// Sliding windows of k rows, flattened: (L-k+1) x (k*d). L must be >= k.
Var im2col(const Var& x, int k);

// Gathers table rows by index; gradient scatter-adds back into the table.
Var embedding_rows(const Var& table, const std::vector<int>& ids);

Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias,
                    double eps = 1e-12);

// Per-row normalization over masked entries: out[i][j] =
// s[i][j] / sum_k mask[i][k]*s[i][k] when the masked row sum exceeds
// `fallback_eps`, else uniform 1/count over the masked entries (constant
// w.r.t. the scores). Unmasked entries are 0.
Var row_normalize_masked(const Var& scores, const Mat& mask,
                         double fallback_eps = 1e-12);

}  // namespace bl::nn
