#pragma once

#include <functional>
#include <vector>

#include "affectrl/tensor.hpp"

namespace affectrl {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction over a fixed parameter set. Consumes the
// gradients present on the parameters and zeroes them after each step.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  void step();
  int64_t step_count() const { return step_count_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamConfig config_;
  int64_t step_count_ = 0;
};

// Single Adam update on raw buffers; moments and step count live in state.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  int64_t step = 0;
};
void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// Compares analytic gradients of f against central finite differences.
// Returns the max over parameter elements of |analytic - numeric| / max(1, |analytic|).
// f must evaluate the forward pass from the given parameters; it is called
// under a fresh tape for the analytic pass and under no tape when perturbed.
double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                  double step);

}  // namespace affectrl
