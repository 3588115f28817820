#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "affectrl/ppo.hpp"
#include "affectrl/rng.hpp"
#include "affectrl/text.hpp"

using namespace affectrl;

namespace {

TransformerLM tiny_model(int vocab = 11, int d_model = 16, uint64_t seed = 5) {
  return TransformerLM::init(
      {.vocab_size = vocab, .d_model = d_model, .n_layers = 2, .n_heads = 4, .max_seq_len = 16},
      seed);
}

PpoConfig small_config() {
  PpoConfig cfg;
  cfg.episodes = 4;
  cfg.rollouts_per_episode = 8;
  cfg.ppo_epochs = 2;
  cfg.minibatch_size = 4;
  cfg.max_response_len = 6;
  cfg.policy_lr = 1e-3;
  cfg.seed = 17;
  return cfg;
}

}  // namespace

TEST_CASE("shaped reward identities") {
  SplitMix64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const double r = rng.uniform(-2.0, 2.0);
    const double a = rng.uniform(-10.0, 10.0);
    const double beta = rng.uniform(0.0, 5.0);
    CHECK(shaped_reward(r, a, a, beta) == r);  // pi == p leaves reward unchanged
    CHECK(shaped_reward(r, a, rng.uniform(-10.0, 10.0), 0.0) == r);
  }
  CHECK(shaped_reward(0.5, 0.2, 0.0, 0.1) == doctest::Approx(0.48).epsilon(1e-15));
  CHECK_THROWS_AS(shaped_reward(0.1, NAN, 0.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(shaped_reward(0.1, 0.0, 0.0, -0.1), std::invalid_argument);
}

TEST_CASE("adapt_beta band rule and clamping") {
  CHECK(adapt_beta(0.1, 0.05, 0.05) == 0.1);                       // inside the band
  CHECK(adapt_beta(0.1, 0.01, 0.05) == doctest::Approx(0.05));     // too little drift
  CHECK(adapt_beta(0.1, 0.2, 0.05) == doctest::Approx(0.2));       // too much drift
  CHECK(adapt_beta(2e-4, 0.0, 1.0) == doctest::Approx(1e-4));      // lower clamp
  CHECK(adapt_beta(8.0, 100.0, 1.0) == doctest::Approx(10.0));     // upper clamp
  CHECK_THROWS_AS(adapt_beta(0.0, 0.1, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(adapt_beta(0.1, 0.1, 0.0), std::invalid_argument);
}

TEST_CASE("estimate_kl is exactly zero when policy equals reference") {
  std::vector<Rollout> rollouts(3);
  for (auto& r : rollouts) {
    r.logp_policy = {-1.2, -0.4, -2.2};
    r.logp_ref = r.logp_policy;
  }
  CHECK(estimate_kl(rollouts) == 0.0);
  CHECK_THROWS_AS(estimate_kl({}), std::invalid_argument);
}

TEST_CASE("estimate_kl is invariant under duplicating the rollout set") {
  std::vector<Rollout> rollouts(2);
  rollouts[0].logp_policy = {-1.0, -2.0};
  rollouts[0].logp_ref = {-1.5, -1.7};
  rollouts[1].logp_policy = {-0.2};
  rollouts[1].logp_ref = {-0.9};
  const double once = estimate_kl(rollouts);
  std::vector<Rollout> doubled = rollouts;
  doubled.insert(doubled.end(), rollouts.begin(), rollouts.end());
  CHECK(estimate_kl(doubled) == doctest::Approx(once).epsilon(1e-15));
}

TEST_CASE("KL estimator matches full enumeration on a 3-token toy policy") {
  // two per-position categorical tables over a 4-token vocabulary
  const double policy_table[3][4] = {{0.1, 0.2, 0.3, 0.4},
                                     {0.7, 0.1, 0.1, 0.1},
                                     {0.25, 0.25, 0.25, 0.25}};
  const double ref_table[3][4] = {{0.25, 0.25, 0.25, 0.25},
                                  {0.4, 0.2, 0.2, 0.2},
                                  {0.1, 0.1, 0.4, 0.4}};
  // exact KL by enumeration: sum over positions of sum_k p log(p/q)
  double exact = 0.0;
  for (int t = 0; t < 3; ++t)
    for (int k = 0; k < 4; ++k)
      exact += policy_table[t][k] * std::log(policy_table[t][k] / ref_table[t][k]);

  const int n = 100000;
  SplitMix64 rng(2024);
  std::vector<Rollout> rollouts(n);
  std::vector<double> per_seq(n);
  for (int i = 0; i < n; ++i) {
    Rollout& r = rollouts[static_cast<size_t>(i)];
    double seq = 0.0;
    for (int t = 0; t < 3; ++t) {
      const double u = rng.next_double();
      int k = 0;
      double acc = 0.0;
      for (; k < 3; ++k) {
        acc += policy_table[t][k];
        if (u < acc) break;
      }
      r.logp_policy.push_back(std::log(policy_table[t][k]));
      r.logp_ref.push_back(std::log(ref_table[t][k]));
      seq += r.logp_policy.back() - r.logp_ref.back();
    }
    per_seq[static_cast<size_t>(i)] = seq;
  }
  const double estimate = estimate_kl(rollouts);
  double mean = 0.0;
  for (double v : per_seq) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : per_seq) var += (v - mean) * (v - mean);
  const double stderr_ = std::sqrt(var / (n - 1)) / std::sqrt(static_cast<double>(n));
  CHECK(std::fabs(estimate - exact) <= 3.0 * stderr_);
}

TEST_CASE("collect_rollouts is deterministic given the seed") {
  const auto policy = tiny_model();
  const auto reference = policy.frozen_clone();
  const ValueHead vh = ValueHead::init(16);
  PpoEnv env;
  env.prompts = {{2, 5}, {2, 7, 4}};
  env.reward_fn = [](const std::vector<int>&, const std::vector<int>& y) {
    return static_cast<double>(y.size()) * 0.1;
  };
  const auto cfg = small_config();
  const auto a = collect_rollouts(policy, reference, vh, env, cfg, 0.05, 99);
  const auto b = collect_rollouts(policy, reference, vh, env, cfg, 0.05, 99);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].prompt == b[i].prompt);
    CHECK(a[i].response == b[i].response);
    CHECK(a[i].logp_policy == b[i].logp_policy);
    CHECK(a[i].advantages == b[i].advantages);
    CHECK(a[i].reward == b[i].reward);
  }
}

TEST_CASE("collect_rollouts: policy == reference makes the log ratio exactly zero") {
  const auto policy = tiny_model();
  const auto reference = policy.frozen_clone();
  const ValueHead vh = ValueHead::init(16);
  PpoEnv env;
  env.prompts = {{2, 5}};
  env.reward_fn = [](const std::vector<int>&, const std::vector<int>&) { return 0.3; };
  const auto rollouts = collect_rollouts(policy, reference, vh, env, small_config(), 0.05, 7);
  REQUIRE(!rollouts.empty());
  for (const Rollout& r : rollouts)
    for (size_t t = 0; t < r.logp_policy.size(); ++t) CHECK(r.logp_policy[t] == r.logp_ref[t]);
  CHECK(estimate_kl(rollouts) == 0.0);
}

TEST_CASE("collect_rollouts with beta 0 shapes only the terminal reward") {
  const auto policy = tiny_model();
  const auto reference = tiny_model(11, 16, 333);  // different model: nonzero log ratios
  const ValueHead vh = ValueHead::init(16);
  PpoEnv env;
  env.prompts = {{2, 5}};
  env.reward_fn = [](const std::vector<int>&, const std::vector<int>&) { return 0.7; };
  const auto rollouts = collect_rollouts(policy, reference, vh, env, small_config(), 0.0, 7);
  REQUIRE(!rollouts.empty());
  for (const Rollout& r : rollouts) {
    for (double k : r.kl_terms) CHECK(k == 0.0);
    // with gamma=1 and zero value head, summed deltas telescope to the reward
    CHECK(r.reward == 0.7);
  }
}

TEST_CASE("rollout reference log-probs match the snapshot's sequence_log_prob") {
  const auto policy = tiny_model(11, 16, 21);
  const auto reference = tiny_model(11, 16, 22).frozen_clone();
  const ValueHead vh = ValueHead::init(16);
  PpoEnv env;
  env.prompts = {{2, 9, 4}};
  env.reward_fn = [](const std::vector<int>&, const std::vector<int>&) { return 0.0; };
  const auto rollouts = collect_rollouts(policy, reference, vh, env, small_config(), 0.02, 5);
  REQUIRE(!rollouts.empty());
  for (const Rollout& r : rollouts) {
    double sum_ref = 0.0;
    for (double lp : r.logp_ref) sum_ref += lp;
    CHECK(std::fabs(sum_ref - sequence_log_prob(reference, r.prompt, r.response)) < 1e-10);
  }
}

TEST_CASE("failing reward functions exclude the rollout and are counted") {
  const auto policy = tiny_model();
  const auto reference = policy.frozen_clone();
  const ValueHead vh = ValueHead::init(16);
  PpoEnv env;
  env.prompts = {{2, 5}};
  int calls = 0;
  env.reward_fn = [&calls](const std::vector<int>&, const std::vector<int>&) -> double {
    if (++calls % 2 == 0) throw std::runtime_error("scorer unavailable");
    return 0.1;
  };
  CollectStats stats;
  const auto cfg = small_config();
  const auto rollouts = collect_rollouts(policy, reference, vh, env, cfg, 0.05, 3, &stats);
  CHECK(stats.failed == cfg.rollouts_per_episode / 2);
  CHECK(static_cast<int>(rollouts.size()) == cfg.rollouts_per_episode - stats.failed);
}

TEST_CASE("zero advantages leave policy parameters unchanged") {
  const auto policy = tiny_model();
  const ValueHead vh = ValueHead::init(16);
  Adam policy_opt(policy.parameters(), {.lr = 1e-2});
  Adam value_opt(vh.parameters(), {.lr = 1e-2});

  Rollout r;
  r.prompt = {2, 5};
  r.response = {4, 7, 3};
  {
    NoGradGuard no_grad;
    r.logp_policy = response_log_probs(policy, r.prompt, r.response).values();
  }
  r.logp_ref = r.logp_policy;
  r.kl_terms = {0.0, 0.0, 0.0};
  r.values = {0.0, 0.0, 0.0};
  r.advantages = {0.0, 0.0, 0.0};
  r.returns = {0.0, 0.0, 0.0};

  const auto before = policy.clone();
  PpoConfig cfg = small_config();
  cfg.ppo_epochs = 3;
  ppo_update(policy, vh, policy_opt, value_opt, {r}, cfg, 11);
  CHECK(TransformerLM::same_parameters(policy, before));
}

TEST_CASE("one update on a positive-advantage action raises its probability") {
  const auto policy = tiny_model(6, 16, 41);
  const ValueHead vh = ValueHead::init(16);
  Adam policy_opt(policy.parameters(), {.lr = 5e-3});
  Adam value_opt(vh.parameters(), {.lr = 1e-2});
  const std::vector<int> prompt = {2};
  const int action = 4;

  auto action_prob = [&] {
    NoGradGuard no_grad;
    const Tensor logits = policy.forward_logits(prompt);
    std::vector<double> row(logits.cols());
    for (int c = 0; c < logits.cols(); ++c) row[static_cast<size_t>(c)] = logits.at(0, c);
    return softmax(row)[action];
  };

  const double before = action_prob();
  Rollout r;
  r.prompt = prompt;
  r.response = {action};
  {
    NoGradGuard no_grad;
    r.logp_policy = response_log_probs(policy, r.prompt, r.response).values();
  }
  r.logp_ref = r.logp_policy;
  r.kl_terms = {0.0};
  r.values = {0.0};
  r.advantages = {1.0};
  r.returns = {1.0};

  PpoConfig cfg = small_config();
  cfg.ppo_epochs = 1;
  const auto stats = ppo_update(policy, vh, policy_opt, value_opt, {r}, cfg, 13);
  CHECK(action_prob() > before);
  CHECK(stats.clip_fraction >= 0.0);
  CHECK(stats.clip_fraction <= 1.0);
}

TEST_CASE("clipped surrogate gradient passes the finite-difference check") {
  const auto policy = tiny_model(8, 16, 71);
  SplitMix64 rng(5);
  std::vector<Rollout> rollouts(2);
  for (auto& r : rollouts) {
    r.prompt = {2, static_cast<int>(rng.next_below(8))};
    r.response = {static_cast<int>(rng.next_below(8)), static_cast<int>(rng.next_below(8))};
    {
      NoGradGuard no_grad;
      r.logp_policy = response_log_probs(policy, r.prompt, r.response).values();
    }
    // old log-probs offset so ratios start away from 1 and both clip branches engage
    for (double& lp : r.logp_policy) lp += rng.uniform(-0.3, 0.3);
    r.advantages = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
  }
  const double eps = 0.2;
  auto f = [&] {
    Tensor total = Tensor::scalar(0.0);
    int tokens = 0;
    for (const Rollout& r : rollouts) {
      Tensor logp_new = response_log_probs(policy, r.prompt, r.response);
      Tensor ratio = exp(sub(logp_new, Tensor::from_data({2}, r.logp_policy)));
      Tensor adv = Tensor::from_data({2}, r.advantages);
      Tensor surr = minimum(mul(ratio, adv), mul(clip(ratio, 1.0 - eps, 1.0 + eps), adv));
      total = add(total, sum(surr));
      tokens += 2;
    }
    return scale(total, -1.0 / tokens);
  };
  CHECK(grad_check(f, policy.parameters(), 1e-5) <= 1e-4);
}

TEST_CASE("train with zero episodes returns the policy bit-identical to the reference") {
  auto policy = tiny_model();
  const auto reference = policy.frozen_clone();
  PpoEnv env;
  env.prompts = {{2, 5}};
  env.reward_fn = [](const std::vector<int>&, const std::vector<int>&) { return 0.0; };
  PpoConfig cfg = small_config();
  cfg.episodes = 0;
  const auto result = train(policy, reference, env, cfg);
  CHECK(result.history.empty());
  CHECK(!result.aborted);
  CHECK(TransformerLM::same_parameters(policy, reference));
}

TEST_CASE("short training run: reference stays immutable, metrics stay sane") {
  auto policy = tiny_model(11, 16, 3);
  const auto reference = policy.frozen_clone();
  const auto ref_copy = reference.clone();
  PpoEnv env;
  env.prompts = {{2, 5}, {2, 8}};
  // reward responses that use token 6 heavily
  env.reward_fn = [](const std::vector<int>&, const std::vector<int>& y) {
    int hits = 0;
    for (int t : y) hits += t == 6 ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(y.size());
  };
  PpoConfig cfg = small_config();
  cfg.episodes = 5;
  const auto result = train(policy, reference, env, cfg);
  CHECK(!result.aborted);
  REQUIRE(result.history.size() == 5);
  for (const auto& rec : result.history) {
    CHECK(std::isfinite(rec.mean_reward));
    CHECK(std::isfinite(rec.mean_kl));
    CHECK(rec.clip_fraction >= 0.0);
    CHECK(rec.clip_fraction <= 1.0);
    CHECK(rec.beta > 0.0);
  }
  CHECK(TransformerLM::same_parameters(reference, ref_copy));
  CHECK(!TransformerLM::same_parameters(policy, reference));
  // episode 0 collects from the untouched policy: log ratio is exactly zero
  CHECK(result.history[0].mean_kl == 0.0);
}

TEST_CASE("training aborts cleanly when every rollout fails") {
  auto policy = tiny_model();
  const auto reference = policy.frozen_clone();
  PpoEnv env;
  env.prompts = {{2, 5}};
  env.reward_fn = [](const std::vector<int>&, const std::vector<int>&) -> double {
    throw std::runtime_error("no scorer");
  };
  PpoConfig cfg = small_config();
  const auto result = train(policy, reference, env, cfg);
  CHECK(result.aborted);
  CHECK(result.history.empty());
  CHECK(TransformerLM::same_parameters(policy, reference));
}

TEST_CASE("expected_reward: constant environments estimate exactly, zero error") {
  const auto policy = tiny_model();
  PpoEnv env;
  env.prompts = {{2, 5}};
  env.reward_fn = [](const std::vector<int>&, const std::vector<int>&) { return 0.37; };
  PpoConfig cfg = small_config();
  const auto est = expected_reward(policy, env, 50, 9, cfg);
  CHECK(est.mean == doctest::Approx(0.37).epsilon(1e-15));
  CHECK(est.std_error == 0.0);
  CHECK(est.samples == 50);
  CHECK_THROWS_AS(expected_reward(policy, env, 0, 9, cfg), std::invalid_argument);
}

TEST_CASE("expected_reward matches the enumerated expectation on a uniform toy policy") {
  // all-zero parameters: logits are uniform over the 4-token vocabulary
  TransformerLM policy = TransformerLM::init(
      {.vocab_size = 4, .d_model = 8, .n_layers = 1, .n_heads = 2, .max_seq_len = 8}, 1);
  for (Tensor& t : policy.parameters()) std::fill(t.values().begin(), t.values().end(), 0.0);

  const double reward_of[4] = {0.0, 0.4, -0.2, 1.0};
  PpoEnv env;
  env.prompts = {{0}, {1}};
  env.reward_fn = [&](const std::vector<int>&, const std::vector<int>& y) {
    return reward_of[y[0]];
  };
  PpoConfig cfg = small_config();
  cfg.max_response_len = 1;  // single-token responses keep the policy enumerable
  const double exact = (0.0 + 0.4 - 0.2 + 1.0) / 4.0;  // uniform over 4 tokens
  const auto est = expected_reward(policy, env, 20000, 12, cfg);
  CHECK(std::fabs(est.mean - exact) <= 3.0 * est.std_error);

  const auto again = expected_reward(policy, env, 20000, 12, cfg);
  CHECK(again.mean == est.mean);  // same seed, same estimate
}
