#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "affectrl/lm.hpp"
#include "affectrl/optim.hpp"
#include "affectrl/tensor.hpp"

namespace affectrl {

struct PpoConfig {
  double beta0 = 0.05;  // initial KL coefficient
  enum class BetaMode { Fixed, Adaptive };
  BetaMode beta_mode = BetaMode::Adaptive;
  double kl_target = 6.0;  // nats per sequence
  double clip = 0.2;
  double policy_lr = 3e-4;
  double value_lr = 1e-2;
  int episodes = 50;
  int rollouts_per_episode = 64;
  int ppo_epochs = 4;
  int minibatch_size = 8;
  double gamma = 1.0;
  double gae_lambda = 0.95;
  int max_response_len = 16;
  int top_k = 0;  // 0 = full vocabulary
  double temperature = 1.0;
  int checkpoint_every = 0;  // episodes; 0 disables
  bool refresh_reward_model = false;
  uint64_t seed = 0;

  void validate() const;
};

// One sampled prompt/response interaction. Per-token arrays share the
// response length; reference log-probs come from the frozen snapshot.
struct Rollout {
  std::vector<int> prompt;
  std::vector<int> response;
  std::vector<double> logp_policy;  // under the collecting policy ("old")
  std::vector<double> logp_ref;     // under the reference snapshot
  std::vector<double> kl_terms;     // beta * (logp_policy - logp_ref)
  double reward = 0.0;              // terminal reward r(x, y)
  std::vector<double> values;
  std::vector<double> advantages;
  std::vector<double> returns;
};

// Eq. of the shaped reward: r - beta * (logp_policy - logp_ref).
double shaped_reward(double reward, double logp_policy, double logp_ref, double beta);

// Mean over rollouts of the per-sequence summed log ratio. A sample
// estimator: slightly negative values are possible.
double estimate_kl(const std::vector<Rollout>& rollouts);

// Doubling/halving band rule, clamped to [1e-4, 10].
double adapt_beta(double beta, double measured_kl, double kl_target);

// Linear per-position state-value estimate on detached hidden states.
struct ValueHead {
  Tensor w;  // (d_model, 1)
  Tensor b;  // (1)
  static ValueHead init(int d_model);
  std::vector<Tensor> parameters() const { return {w, b}; }
};

using RewardFn = std::function<double(const std::vector<int>&, const std::vector<int>&)>;
using DecodeFn = std::function<std::string(const std::vector<int>&)>;

// Prompt pool plus terminal reward function; decode is optional and only
// feeds transcript reporting.
struct PpoEnv {
  std::vector<std::vector<int>> prompts;
  RewardFn reward_fn;
  DecodeFn decode;
};

struct CollectStats {
  int failed = 0;
};

// Samples responses from the policy, scores them, and fills per-token
// shaped rewards (-beta * log ratio everywhere, terminal reward on the
// final token), GAE advantages, and value-head targets. Rollouts whose
// reward function fails are excluded and counted.
std::vector<Rollout> collect_rollouts(const TransformerLM& policy,
                                      const TransformerLM& reference, const ValueHead& value_head,
                                      const PpoEnv& env, const PpoConfig& config, double beta,
                                      uint64_t episode_seed, CollectStats* stats = nullptr);

struct UpdateStats {
  double surrogate_loss = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  double measured_kl = 0.0;
};

// Clipped-surrogate PPO epochs over the batch plus a squared-error value
// update. Advantages are whitened per batch (skipped at zero variance).
UpdateStats ppo_update(const TransformerLM& policy, const ValueHead& value_head,
                       Adam& policy_opt, Adam& value_opt, const std::vector<Rollout>& rollouts,
                       const PpoConfig& config, uint64_t update_seed);

struct EpisodeRecord {
  int episode = 0;
  double mean_reward = 0.0;
  double mean_kl = 0.0;
  double beta = 0.0;
  double clip_fraction = 0.0;
  double surrogate_loss = 0.0;
  double value_loss = 0.0;
  int failed_rollouts = 0;
  std::vector<std::string> transcripts;
};

struct TrainResult {
  std::vector<EpisodeRecord> history;
  bool aborted = false;
  std::string abort_reason;
};

using EpisodeCallback = std::function<void(const EpisodeRecord&, const TransformerLM&)>;
using RefreshCallback = std::function<void(int episode)>;

// Full fine-tuning loop: collect -> (optional reward refresh) -> update ->
// beta adaptation. On a non-finite loss the policy reverts to the last
// good episode and training stops.
TrainResult train(TransformerLM& policy, const TransformerLM& reference, const PpoEnv& env,
                  const PpoConfig& config, const EpisodeCallback& on_episode = nullptr,
                  const RefreshCallback& refresh = nullptr);

struct RewardEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  int samples = 0;
};

// Monte-Carlo estimate of the expected reward over the env's prompt pool.
RewardEstimate expected_reward(const TransformerLM& policy, const PpoEnv& env, int n_samples,
                               uint64_t seed, const PpoConfig& config);

}  // namespace affectrl
