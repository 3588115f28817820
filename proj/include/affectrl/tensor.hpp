#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace affectrl {

// Dense row-major tensor of 64-bit floats with reverse-mode autodiff.
// Tensors are cheap handles onto shared nodes; ops record backward steps
// onto the active GradTape when any input is tracked.

struct TensorNode {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated lazily, zero-initialized
  bool requires_grad = false;
  bool tracked = false;  // produced on a tape (or a leaf with requires_grad)

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() : node_(std::make_shared<TensorNode>()) {}
  explicit Tensor(std::vector<int> shape, double fill = 0.0, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);

  const std::vector<int>& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int numel() const { return static_cast<int>(node_->data.size()); }
  int rows() const;
  int cols() const;

  double* data() { return node_->data.data(); }
  const double* data() const { return node_->data.data(); }
  std::vector<double>& values() { return node_->data; }
  const std::vector<double>& values() const { return node_->data; }

  double item() const;                     // scalar tensors only
  double at(int i) const { return node_->data[static_cast<size_t>(i)]; }
  double at(int r, int c) const { return node_->data[static_cast<size_t>(r) * cols() + c]; }
  double& at(int i) { return node_->data[static_cast<size_t>(i)]; }
  double& at(int r, int c) { return node_->data[static_cast<size_t>(r) * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  const std::vector<double>& grad() const;
  void zero_grad();

  // Deep copy of the data; the copy is untracked.
  Tensor clone() const;
  // Shares data but never records onto a tape and carries no grad.
  Tensor detach() const;

  std::shared_ptr<TensorNode> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<TensorNode> node_;
  friend class GradTape;
};

// Ordered record of backward steps. Replaying visits each recorded op once
// in reverse order; gradients accumulate additively at fan-out. The tape is
// cleared after backward; calling backward again without a new forward is
// an error. Single-threaded by contract.
class GradTape {
 public:
  GradTape();
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  void record(std::function<void()> step) { steps_.push_back(std::move(step)); }
  void backward(const Tensor& loss);
  size_t size() const { return steps_.size(); }
  bool empty() const { return steps_.empty(); }

  static GradTape* active();

 private:
  std::vector<std::function<void()>> steps_;
  GradTape* prev_ = nullptr;
};

// Suspends tape recording for its lifetime (inference / sampling paths).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  GradTape* saved_;
};

// ---- differentiable primitives -------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
// mat (n x d) + bias (d), broadcast over rows.
Tensor add_bias(const Tensor& mat, const Tensor& bias);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// Gathers rows of table (V x d) by id; backward scatter-adds.
Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps = 1e-5);
Tensor gelu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor clip(const Tensor& x, double lo, double hi);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& x);
// Row i is a softmax over columns 0..i; columns above the diagonal are zero.
Tensor causal_softmax_rows(const Tensor& scores);
Tensor log_softmax_rows(const Tensor& x);
// out[i] = mat[i, ids[i]].
Tensor take_per_row(const Tensor& mat, const std::vector<int>& ids);
Tensor slice_rows(const Tensor& mat, int start, int len);
Tensor slice_cols(const Tensor& mat, int start, int len);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Mean over rows of -log softmax(logits)[target], computed stably.
Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets);

// Plain softmax on a vector, max-subtracted for stability.
std::vector<double> softmax(const std::vector<double>& logits);

}  // namespace affectrl
