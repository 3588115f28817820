#include "affectrl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "affectrl/rng.hpp"

namespace affectrl {

void PpoConfig::validate() const {
  if (!(clip > 0.0 && clip < 1.0)) throw std::invalid_argument("ppo config: clip must be in (0, 1)");
  if (beta0 < 0.0) throw std::invalid_argument("ppo config: beta0 must be >= 0");
  if (!(kl_target > 0.0)) throw std::invalid_argument("ppo config: kl_target must be > 0");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("ppo config: gamma must be in [0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0))
    throw std::invalid_argument("ppo config: gae_lambda must be in [0, 1]");
  if (episodes < 0 || rollouts_per_episode < 1 || ppo_epochs < 1 || minibatch_size < 1)
    throw std::invalid_argument("ppo config: bad episode/rollout counts");
  if (max_response_len < 1) throw std::invalid_argument("ppo config: max_response_len must be >= 1");
  if (temperature < 0.0) throw std::invalid_argument("ppo config: negative temperature");
}

double shaped_reward(double reward, double logp_policy, double logp_ref, double beta) {
  if (beta < 0.0) throw std::invalid_argument("shaped_reward: beta must be >= 0");
  if (!std::isfinite(logp_policy) || !std::isfinite(logp_ref))
    throw std::invalid_argument("shaped_reward: non-finite log-probs");
  return reward - beta * (logp_policy - logp_ref);
}

double estimate_kl(const std::vector<Rollout>& rollouts) {
  if (rollouts.empty()) throw std::invalid_argument("estimate_kl: empty rollout set");
  double total = 0.0;
  for (const Rollout& r : rollouts) {
    double seq = 0.0;
    for (size_t t = 0; t < r.logp_policy.size(); ++t) seq += r.logp_policy[t] - r.logp_ref[t];
    total += seq;
  }
  return total / static_cast<double>(rollouts.size());
}

double adapt_beta(double beta, double measured_kl, double kl_target) {
  if (!(beta > 0.0)) throw std::invalid_argument("adapt_beta: beta must be > 0");
  if (!(kl_target > 0.0)) throw std::invalid_argument("adapt_beta: kl_target must be > 0");
  double next = beta;
  if (measured_kl < kl_target / 1.5)
    next = beta / 2.0;
  else if (measured_kl > kl_target * 1.5)
    next = beta * 2.0;
  return std::clamp(next, 1e-4, 10.0);
}

ValueHead ValueHead::init(int d_model) {
  ValueHead head;
  head.w = Tensor({d_model, 1}, 0.0, /*requires_grad=*/true);
  head.b = Tensor({1}, 0.0, /*requires_grad=*/true);
  return head;
}

namespace {

// Hidden states over prompt+response minus the final token: row px-1+t is
// the state from which token y_t is emitted.
std::vector<int> emission_inputs(const std::vector<int>& prompt, const std::vector<int>& response) {
  std::vector<int> full = prompt;
  full.insert(full.end(), response.begin(), response.end());
  full.pop_back();
  return full;
}

std::vector<double> value_estimates(const ValueHead& head, const Tensor& hidden, int px, int py) {
  NoGradGuard no_grad;
  Tensor resp_hidden = slice_rows(hidden, px - 1, py);
  Tensor v = add_bias(matmul(resp_hidden, head.w), head.b);
  return v.values();
}

void compute_gae(Rollout& r, double beta, const PpoConfig& config) {
  const size_t n = r.response.size();
  r.kl_terms.resize(n);
  for (size_t t = 0; t < n; ++t) r.kl_terms[t] = beta * (r.logp_policy[t] - r.logp_ref[t]);
  r.advantages.assign(n, 0.0);
  r.returns.assign(n, 0.0);
  double gae = 0.0;
  for (size_t i = n; i > 0; --i) {
    const size_t t = i - 1;
    const double step_reward = -r.kl_terms[t] + (t + 1 == n ? r.reward : 0.0);
    const double next_value = t + 1 == n ? 0.0 : r.values[t + 1];
    const double delta = step_reward + config.gamma * next_value - r.values[t];
    gae = delta + config.gamma * config.gae_lambda * gae;
    r.advantages[t] = gae;
    r.returns[t] = gae + r.values[t];
  }
}

}  // namespace

std::vector<Rollout> collect_rollouts(const TransformerLM& policy,
                                      const TransformerLM& reference, const ValueHead& value_head,
                                      const PpoEnv& env, const PpoConfig& config, double beta,
                                      uint64_t episode_seed, CollectStats* stats) {
  config.validate();
  if (env.prompts.empty()) throw std::invalid_argument("collect_rollouts: empty prompt pool");
  if (!env.reward_fn) throw std::invalid_argument("collect_rollouts: missing reward function");
  const int max_seq = policy.config().max_seq_len;
  for (const auto& p : env.prompts)
    if (p.empty() || static_cast<int>(p.size()) >= max_seq)
      throw std::invalid_argument("collect_rollouts: prompt length leaves no room to generate");

  NoGradGuard no_grad;
  SplitMix64 pick_rng(derive_seed(episode_seed, "prompt-pick"));
  std::vector<Rollout> rollouts;
  rollouts.reserve(static_cast<size_t>(config.rollouts_per_episode));
  int failed = 0;

  for (int i = 0; i < config.rollouts_per_episode; ++i) {
    Rollout r;
    r.prompt = env.prompts[pick_rng.next_below(env.prompts.size())];
    SampleConfig sample{.max_new = config.max_response_len,
                        .temperature = config.temperature,
                        .top_k = config.top_k,
                        .seed = derive_seed(episode_seed, "rollout", static_cast<uint64_t>(i))};
    r.response = generate(policy, r.prompt, sample);
    if (r.response.empty()) {
      ++failed;
      continue;
    }
    const int px = static_cast<int>(r.prompt.size());
    const int py = static_cast<int>(r.response.size());

    const std::vector<int> inputs = emission_inputs(r.prompt, r.response);
    Tensor hidden = policy.hidden_states(inputs);
    Tensor logits = add_bias(matmul(hidden, policy.head_w), policy.head_b);
    Tensor resp_logits = slice_rows(logits, px - 1, py);
    r.logp_policy = take_per_row(log_softmax_rows(resp_logits), r.response).values();
    r.logp_ref = response_log_probs(reference, r.prompt, r.response).values();
    r.values = value_estimates(value_head, hidden, px, py);

    try {
      r.reward = env.reward_fn(r.prompt, r.response);
    } catch (const std::exception&) {
      ++failed;
      continue;
    }
    if (!std::isfinite(r.reward)) {
      ++failed;
      continue;
    }
    compute_gae(r, beta, config);
    rollouts.push_back(std::move(r));
  }
  if (stats != nullptr) stats->failed = failed;
  return rollouts;
}

UpdateStats ppo_update(const TransformerLM& policy, const ValueHead& value_head,
                       Adam& policy_opt, Adam& value_opt, const std::vector<Rollout>& rollouts,
                       const PpoConfig& config, uint64_t update_seed) {
  if (rollouts.empty()) throw std::invalid_argument("ppo_update: empty rollout batch");

  // whiten advantages over the whole batch; skip when variance vanishes
  std::vector<std::vector<double>> whitened(rollouts.size());
  {
    double sum = 0.0;
    int64_t count = 0;
    for (const Rollout& r : rollouts)
      for (double a : r.advantages) {
        sum += a;
        ++count;
      }
    const double mean_adv = sum / static_cast<double>(count);
    double var = 0.0;
    for (const Rollout& r : rollouts)
      for (double a : r.advantages) var += (a - mean_adv) * (a - mean_adv);
    var /= static_cast<double>(count);
    const double sd = std::sqrt(var);
    for (size_t i = 0; i < rollouts.size(); ++i) {
      whitened[i] = rollouts[i].advantages;
      if (sd > 1e-8)
        for (double& a : whitened[i]) a = (a - mean_adv) / sd;
    }
  }

  UpdateStats stats;
  stats.measured_kl = estimate_kl(rollouts);
  double loss_sum = 0.0, vloss_sum = 0.0;
  int64_t clip_hits = 0, token_total = 0;
  int steps = 0;

  std::vector<size_t> order(rollouts.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.ppo_epochs; ++epoch) {
    SplitMix64 rng(derive_seed(update_seed, "ppo-epoch", static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.next_below(i)]);

    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.minibatch_size)) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(config.minibatch_size));
      GradTape tape;
      Tensor surrogate_sum = Tensor::scalar(0.0);
      Tensor vloss_batch = Tensor::scalar(0.0);
      int64_t batch_tokens = 0;

      for (size_t k = start; k < stop; ++k) {
        const Rollout& r = rollouts[order[k]];
        const int px = static_cast<int>(r.prompt.size());
        const int py = static_cast<int>(r.response.size());
        const std::vector<int> inputs = emission_inputs(r.prompt, r.response);

        Tensor hidden = policy.hidden_states(inputs);
        Tensor logits = add_bias(matmul(hidden, policy.head_w), policy.head_b);
        Tensor resp_logits = slice_rows(logits, px - 1, py);
        Tensor logp_new = take_per_row(log_softmax_rows(resp_logits), r.response);

        Tensor logp_old = Tensor::from_data({py}, r.logp_policy);
        Tensor adv = Tensor::from_data({py}, whitened[order[k]]);
        Tensor ratio = exp(sub(logp_new, logp_old));
        for (int t = 0; t < py; ++t) {
          const double rv = ratio.at(t);
          if (rv < 1.0 - config.clip || rv > 1.0 + config.clip) ++clip_hits;
        }
        Tensor unclipped = mul(ratio, adv);
        Tensor clipped = mul(clip(ratio, 1.0 - config.clip, 1.0 + config.clip), adv);
        surrogate_sum = add(surrogate_sum, sum(minimum(unclipped, clipped)));

        Tensor resp_hidden_fixed;
        {
          NoGradGuard no_grad;
          resp_hidden_fixed = slice_rows(hidden, px - 1, py);
        }
        Tensor v = add_bias(matmul(resp_hidden_fixed, value_head.w), value_head.b);
        Tensor vdiff = sub(v, Tensor::from_data({py, 1}, r.returns));
        vloss_batch = add(vloss_batch, sum(mul(vdiff, vdiff)));
        batch_tokens += py;
      }

      const double inv_tokens = 1.0 / static_cast<double>(batch_tokens);
      Tensor policy_loss = scale(surrogate_sum, -inv_tokens);
      Tensor value_loss = scale(vloss_batch, inv_tokens);
      Tensor loss = add(policy_loss, value_loss);
      loss_sum += policy_loss.item();
      vloss_sum += value_loss.item();
      token_total += batch_tokens;
      ++steps;
      tape.backward(loss);
      policy_opt.step();
      value_opt.step();
    }
  }

  stats.surrogate_loss = loss_sum / steps;
  stats.value_loss = vloss_sum / steps;
  stats.clip_fraction = static_cast<double>(clip_hits) / static_cast<double>(token_total);
  return stats;
}

TrainResult train(TransformerLM& policy, const TransformerLM& reference, const PpoEnv& env,
                  const PpoConfig& config, const EpisodeCallback& on_episode,
                  const RefreshCallback& refresh) {
  config.validate();
  TrainResult result;
  if (config.episodes == 0) return result;

  ValueHead value_head = ValueHead::init(policy.config().d_model);
  Adam policy_opt(policy.parameters(), {.lr = config.policy_lr});
  Adam value_opt(value_head.parameters(), {.lr = config.value_lr});
  double beta = config.beta0;
  TransformerLM last_good = policy.clone();

  for (int episode = 0; episode < config.episodes; ++episode) {
    const uint64_t episode_seed = derive_seed(config.seed, "ppo-episode", static_cast<uint64_t>(episode));
    CollectStats cstats;
    std::vector<Rollout> rollouts =
        collect_rollouts(policy, reference, value_head, env, config, beta, episode_seed, &cstats);
    if (rollouts.empty()) {
      result.aborted = true;
      result.abort_reason = "episode " + std::to_string(episode) + ": every rollout failed";
      break;
    }
    if (config.refresh_reward_model && refresh) refresh(episode);

    const UpdateStats ustats = ppo_update(policy, value_head, policy_opt, value_opt, rollouts,
                                          config, derive_seed(config.seed, "ppo-update",
                                                              static_cast<uint64_t>(episode)));
    EpisodeRecord record;
    record.episode = episode;
    record.beta = beta;
    record.mean_kl = ustats.measured_kl;
    record.clip_fraction = ustats.clip_fraction;
    record.surrogate_loss = ustats.surrogate_loss;
    record.value_loss = ustats.value_loss;
    record.failed_rollouts = cstats.failed;
    double reward_sum = 0.0;
    for (const Rollout& r : rollouts) reward_sum += r.reward;
    record.mean_reward = reward_sum / static_cast<double>(rollouts.size());
    if (env.decode) {
      for (size_t i = 0; i < rollouts.size() && i < 2; ++i)
        record.transcripts.push_back(env.decode(rollouts[i].prompt) + " -> " +
                                     env.decode(rollouts[i].response));
    }

    const bool finite = std::isfinite(record.mean_reward) && std::isfinite(record.mean_kl) &&
                        std::isfinite(record.surrogate_loss) && std::isfinite(record.value_loss);
    if (!finite) {
      policy = last_good.clone();
      result.aborted = true;
      result.abort_reason = "episode " + std::to_string(episode) + ": non-finite training loss";
      break;
    }
    last_good = policy.clone();

    if (config.beta_mode == PpoConfig::BetaMode::Adaptive)
      beta = adapt_beta(beta, std::max(0.0, record.mean_kl), config.kl_target);

    result.history.push_back(record);
    if (on_episode) on_episode(result.history.back(), policy);
  }
  return result;
}

RewardEstimate expected_reward(const TransformerLM& policy, const PpoEnv& env, int n_samples,
                               uint64_t seed, const PpoConfig& config) {
  if (n_samples < 1) throw std::invalid_argument("expected_reward: n_samples must be >= 1");
  if (env.prompts.empty()) throw std::invalid_argument("expected_reward: empty prompt pool");
  NoGradGuard no_grad;
  SplitMix64 pick_rng(derive_seed(seed, "expected-prompt"));
  std::vector<double> rewards;
  rewards.reserve(static_cast<size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) {
    const std::vector<int>& prompt = env.prompts[pick_rng.next_below(env.prompts.size())];
    SampleConfig sample{.max_new = config.max_response_len,
                        .temperature = config.temperature,
                        .top_k = config.top_k,
                        .seed = derive_seed(seed, "expected-sample", static_cast<uint64_t>(i))};
    const std::vector<int> response = generate(policy, prompt, sample);
    if (response.empty()) continue;
    rewards.push_back(env.reward_fn(prompt, response));
  }
  if (rewards.empty()) throw std::runtime_error("expected_reward: no successful samples");
  RewardEstimate est;
  est.samples = static_cast<int>(rewards.size());
  // offset by the first sample: a constant environment yields mean == c and
  // zero spread exactly
  const double offset = rewards[0];
  double shifted = 0.0;
  for (double r : rewards) shifted += r - offset;
  est.mean = offset + shifted / static_cast<double>(rewards.size());
  if (rewards.size() > 1) {
    double ss = 0.0;
    for (double r : rewards) ss += (r - est.mean) * (r - est.mean);
    est.std_error = std::sqrt(ss / (rewards.size() - 1)) / std::sqrt(static_cast<double>(rewards.size()));
  }
  return est;
}

}  // namespace affectrl
