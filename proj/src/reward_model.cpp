#include "affectrl/reward_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "affectrl/optim.hpp"
#include "affectrl/rng.hpp"

namespace affectrl {

RewardHead RewardHead::init(int d_model, uint64_t seed) {
  SplitMix64 rng(derive_seed(seed, "reward-head-init"));
  RewardHead head;
  head.w = Tensor({d_model, kOutputs}, 0.0, /*requires_grad=*/true);
  for (int i = 0; i < head.w.numel(); ++i) head.w.at(i) = rng.normal(0.0, 0.05);
  head.b = Tensor({kOutputs}, 0.0, /*requires_grad=*/true);
  return head;
}

RewardHead RewardHead::zeros(int d_model) {
  RewardHead head;
  head.w = Tensor({d_model, kOutputs}, 0.0, /*requires_grad=*/true);
  head.b = Tensor({kOutputs}, 0.0, /*requires_grad=*/true);
  return head;
}

Tensor pool_embedding(const TransformerLM& model, const std::vector<int>& prompt,
                      const std::vector<int>& response, PoolMode mode) {
  if (prompt.empty()) throw std::invalid_argument("pool_embedding: empty prompt");
  if (response.empty()) throw std::invalid_argument("pool_embedding: empty response");
  const int px = static_cast<int>(prompt.size());
  const int py = static_cast<int>(response.size());
  if (px + py > model.config().max_seq_len)
    throw std::invalid_argument("pool_embedding: combined length exceeds max_seq_len");
  NoGradGuard no_grad;
  std::vector<int> full = prompt;
  full.insert(full.end(), response.begin(), response.end());
  Tensor h = model.hidden_states(full);
  const int d = model.config().d_model;
  if (mode == PoolMode::LastToken) {
    Tensor out({d});
    const double* row = h.data() + static_cast<size_t>(px + py - 1) * d;
    std::copy(row, row + d, out.data());
    return out;
  }
  Tensor out({d});
  for (int i = px; i < px + py; ++i) {
    const double* row = h.data() + static_cast<size_t>(i) * d;
    for (int j = 0; j < d; ++j) out.at(j) += row[j];
  }
  for (int j = 0; j < d; ++j) out.at(j) /= py;
  return out;
}

namespace {

// embedding (d) -> raw head outputs (9), plain arithmetic, no tape.
std::array<double, RewardHead::kOutputs> head_raw(const RewardHead& head, const Tensor& e) {
  if (e.numel() != head.d_model())
    throw std::invalid_argument("reward head: embedding dimension mismatch");
  std::array<double, RewardHead::kOutputs> out{};
  const int d = head.d_model();
  for (int j = 0; j < RewardHead::kOutputs; ++j) out[static_cast<size_t>(j)] = head.b.at(j);
  for (int i = 0; i < d; ++i) {
    const double v = e.at(i);
    if (v == 0.0) continue;
    const double* wrow = head.w.data() + static_cast<size_t>(i) * RewardHead::kOutputs;
    for (int j = 0; j < RewardHead::kOutputs; ++j) out[static_cast<size_t>(j)] += v * wrow[j];
  }
  return out;
}

}  // namespace

RewardScore score_embedding(const RewardHead& head, const Tensor& embedding) {
  const auto raw = head_raw(head, embedding);
  std::vector<double> logits(raw.begin(), raw.begin() + kEmotionCount);
  const std::vector<double> probs = softmax(logits);
  RewardScore s;
  std::copy(probs.begin(), probs.end(), s.probs.begin());
  s.top = static_cast<EmotionLabel>(
      std::max_element(probs.begin(), probs.end()) - probs.begin());
  s.point.arousal = std::tanh(raw[kEmotionCount]);
  s.point.valence = std::tanh(raw[kEmotionCount + 1]);
  s.reward = circumplex_reward(s.point);
  return s;
}

RewardScore score(const TransformerLM& model, const RewardHead& head,
                  const std::vector<int>& prompt, const std::vector<int>& response,
                  PoolMode mode) {
  return score_embedding(head, pool_embedding(model, prompt, response, mode));
}

RewardTrainMetrics train_reward_head(RewardHead& head, const std::vector<Tensor>& embeddings,
                                     const std::vector<EmotionLabel>& labels,
                                     const CircumplexTable& table,
                                     const RewardTrainConfig& config) {
  if (embeddings.empty()) throw std::invalid_argument("train_reward_head: empty dataset");
  if (embeddings.size() != labels.size())
    throw std::invalid_argument("train_reward_head: embeddings/labels size mismatch");
  const int d = head.d_model();
  for (const Tensor& e : embeddings)
    if (e.numel() != d) throw std::invalid_argument("train_reward_head: embedding dim mismatch");

  // deterministic shuffled split
  std::vector<size_t> order(embeddings.size());
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 split_rng(derive_seed(config.seed, "reward-split"));
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[split_rng.next_below(i)]);
  const size_t n_holdout =
      std::min(order.size() - 1, static_cast<size_t>(config.holdout * static_cast<double>(order.size())));
  std::vector<size_t> train_idx(order.begin(), order.end() - static_cast<ptrdiff_t>(n_holdout));
  std::vector<size_t> hold_idx(order.end() - static_cast<ptrdiff_t>(n_holdout), order.end());

  RewardTrainMetrics metrics;
  metrics.train_samples = static_cast<int>(train_idx.size());
  metrics.holdout_samples = static_cast<int>(hold_idx.size());

  Adam opt(head.parameters(), {.lr = config.lr});
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    SplitMix64 rng(derive_seed(config.seed, "reward-epoch", static_cast<uint64_t>(epoch)));
    for (size_t i = train_idx.size(); i > 1; --i)
      std::swap(train_idx[i - 1], train_idx[rng.next_below(i)]);

    for (size_t start = 0; start < train_idx.size();
         start += static_cast<size_t>(config.batch_size)) {
      const size_t stop =
          std::min(train_idx.size(), start + static_cast<size_t>(config.batch_size));
      const int n = static_cast<int>(stop - start);

      Tensor batch({n, d});
      std::vector<int> targets(static_cast<size_t>(n));
      Tensor av_target({n, 2});
      for (int r = 0; r < n; ++r) {
        const size_t src = train_idx[start + static_cast<size_t>(r)];
        std::copy(embeddings[src].values().begin(), embeddings[src].values().end(),
                  batch.data() + static_cast<size_t>(r) * d);
        targets[static_cast<size_t>(r)] = static_cast<int>(labels[src]);
        const AffectPoint& p = table[labels[src]];
        av_target.at(r, 0) = p.arousal;
        av_target.at(r, 1) = p.valence;
      }

      GradTape tape;
      Tensor raw = add_bias(matmul(batch, head.w), head.b);
      Tensor emotion_logits = slice_cols(raw, 0, kEmotionCount);
      Tensor av = tanh(slice_cols(raw, kEmotionCount, 2));
      Tensor ce = cross_entropy_rows(emotion_logits, targets);
      Tensor diff = sub(av, av_target);
      Tensor mse = scale(sum(mul(diff, diff)), 1.0 / n);
      Tensor loss = add(ce, scale(mse, config.mu));
      metrics.losses.push_back(loss.item());
      tape.backward(loss);
      opt.step();
    }
  }

  // held-out metrics (training metrics when no holdout was requested)
  const std::vector<size_t>& eval_idx = hold_idx.empty() ? train_idx : hold_idx;
  int correct = 0;
  double mae = 0.0;
  for (size_t idx : eval_idx) {
    const RewardScore s = score_embedding(head, embeddings[idx]);
    if (s.top == labels[idx]) ++correct;
    const AffectPoint& target = table[labels[idx]];
    mae += 0.5 * (std::fabs(s.point.arousal - target.arousal) +
                  std::fabs(s.point.valence - target.valence));
  }
  metrics.holdout_accuracy = static_cast<double>(correct) / static_cast<double>(eval_idx.size());
  metrics.av_mae = mae / static_cast<double>(eval_idx.size());
  return metrics;
}

RewardTrainMetrics train_reward_model(const TransformerLM& model, RewardHead& head,
                                      const std::vector<DialoguePair>& dataset,
                                      const CircumplexTable& table,
                                      const RewardTrainConfig& config, PoolMode mode) {
  if (dataset.empty()) throw std::invalid_argument("train_reward_model: empty dataset");
  std::vector<Tensor> embeddings;
  std::vector<EmotionLabel> labels;
  embeddings.reserve(dataset.size());
  labels.reserve(dataset.size());
  for (const DialoguePair& pair : dataset) {
    embeddings.push_back(pool_embedding(model, pair.prompt, pair.response, mode));
    labels.push_back(pair.label);
  }
  return train_reward_head(head, embeddings, labels, table, config);
}

}  // namespace affectrl
