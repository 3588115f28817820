#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "affectrl/affect.hpp"
#include "affectrl/data.hpp"
#include "affectrl/lm.hpp"
#include "affectrl/tensor.hpp"

namespace affectrl {

enum class PoolMode { LastToken, Mean };

// Linear head on the LM's pooled hidden state: 7 emotion logits plus raw
// arousal/valence scores squashed into [-1, 1] by tanh.
struct RewardHead {
  static constexpr int kOutputs = kEmotionCount + 2;
  Tensor w;  // (d_model, 9)
  Tensor b;  // (9)

  static RewardHead init(int d_model, uint64_t seed);
  static RewardHead zeros(int d_model);
  std::vector<Tensor> parameters() const { return {w, b}; }
  int d_model() const { return w.rows(); }
};

// Final-layer hidden state pooled over the response: the last response
// token's row, or the mean over response rows.
Tensor pool_embedding(const TransformerLM& model, const std::vector<int>& prompt,
                      const std::vector<int>& response, PoolMode mode = PoolMode::LastToken);

struct RewardScore {
  std::array<double, kEmotionCount> probs{};
  EmotionLabel top = EmotionLabel::Neutral;
  AffectPoint point;
  double reward = 0.0;
};

RewardScore score_embedding(const RewardHead& head, const Tensor& embedding);
RewardScore score(const TransformerLM& model, const RewardHead& head,
                  const std::vector<int>& prompt, const std::vector<int>& response,
                  PoolMode mode = PoolMode::LastToken);

struct RewardTrainConfig {
  int epochs = 40;
  int batch_size = 32;
  double lr = 5e-3;
  double mu = 1.0;         // weight of the (A, V) regression term
  double holdout = 0.1;    // fraction held out for accuracy / MAE
  uint64_t seed = 0;
};

struct RewardTrainMetrics {
  std::vector<double> losses;  // per optimizer step
  double holdout_accuracy = 0.0;
  double av_mae = 0.0;
  int train_samples = 0;
  int holdout_samples = 0;
};

// Cross-entropy on the emotion logits plus mu * squared error between the
// squashed (A, V) and the circumplex coordinates of the gold label. Only
// the head trains; embeddings are fixed inputs.
RewardTrainMetrics train_reward_head(RewardHead& head, const std::vector<Tensor>& embeddings,
                                     const std::vector<EmotionLabel>& labels,
                                     const CircumplexTable& table,
                                     const RewardTrainConfig& config);

// Pools one embedding per dialogue pair under the frozen LM, then trains
// the head on them.
RewardTrainMetrics train_reward_model(const TransformerLM& model, RewardHead& head,
                                      const std::vector<DialoguePair>& dataset,
                                      const CircumplexTable& table,
                                      const RewardTrainConfig& config,
                                      PoolMode mode = PoolMode::LastToken);

}  // namespace affectrl
