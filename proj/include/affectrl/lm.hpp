#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "affectrl/data.hpp"
#include "affectrl/tensor.hpp"

namespace affectrl {

struct LmConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int max_seq_len = 64;

  void validate() const;
  bool operator==(const LmConfig&) const = default;
};

// Decoder-only transformer: learned token + position embeddings, pre-norm
// blocks with causal self-attention and a GELU feed-forward, final norm,
// and an untied LM head.
class TransformerLM {
 public:
  TransformerLM() = default;
  static TransformerLM init(const LmConfig& config, uint64_t seed);

  const LmConfig& config() const { return config_; }

  // Final hidden states, one row per input position.
  Tensor hidden_states(const std::vector<int>& tokens) const;
  // Next-token logits per position, shape (len, vocab).
  Tensor forward_logits(const std::vector<int>& tokens) const;

  // All learnable tensors in a fixed canonical order.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  int64_t parameter_count() const;

  // Deep copy; frozen copies drop requires_grad so they never train.
  TransformerLM clone() const;
  TransformerLM frozen_clone() const;

  // True when every parameter is bit-identical.
  static bool same_parameters(const TransformerLM& a, const TransformerLM& b);

  struct Block {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_gain, ln2_bias;
    Tensor fc1_w, fc1_b, fc2_w, fc2_b;
  };

  Tensor tok_emb, pos_emb;
  std::vector<Block> blocks;
  Tensor lnf_gain, lnf_bias;
  Tensor head_w, head_b;

 private:
  LmConfig config_;
};

// log p(y | x) under the model: the sum over response positions of
// log softmax(logits)[token]. x must be non-empty (it carries BOS) and
// |x| + |y| must fit in max_seq_len.
double sequence_log_prob(const TransformerLM& model, const std::vector<int>& prompt,
                         const std::vector<int>& response);

// Per-response-token log-probs (length |y|), differentiable when recorded.
Tensor response_log_probs(const TransformerLM& model, const std::vector<int>& prompt,
                          const std::vector<int>& response);

struct SampleConfig {
  int max_new = 16;
  double temperature = 1.0;
  int top_k = 0;  // 0 means the full vocabulary
  uint64_t seed = 0;
};

// Samples until EOS or max_new tokens. temperature 0 (or top_k 1) decodes
// greedily; otherwise top-k truncation precedes temperature scaling.
std::vector<int> generate(const TransformerLM& model, const std::vector<int>& prompt,
                          const SampleConfig& sample);

struct LmTrainConfig {
  int epochs = 12;
  int batch_size = 32;
  double lr = 1e-3;
  uint64_t seed = 0;
};

// Next-token cross-entropy over response positions of each pair. Returns
// the per-step loss curve in nats per token.
std::vector<double> train_lm(TransformerLM& model, const std::vector<DialoguePair>& pairs,
                             const LmTrainConfig& config);

// Mean cross-entropy (nats/token) of the model on the given pairs.
double lm_loss(const TransformerLM& model, const std::vector<DialoguePair>& pairs);

// Perplexity of the maximum-likelihood unigram model over response tokens.
double unigram_perplexity(const std::vector<DialoguePair>& pairs);

}  // namespace affectrl
