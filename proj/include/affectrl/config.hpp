#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "affectrl/lm.hpp"
#include "affectrl/ppo.hpp"
#include "affectrl/reward_model.hpp"

namespace affectrl {

// Flat "key = value" text format with # comments.
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> load_config_file(const std::string& path);
std::string serialize_config(const std::map<std::string, std::string>& kv);

// Fully resolved run configuration: defaults, then config file, then flag
// overrides. Unknown keys are rejected.
struct RunConfig {
  uint64_t seed = 7;
  std::string out_dir;
  std::string corpus_path;
  std::string vocab_path;
  std::string lexicon_path;     // empty = built-in defaults
  std::string circumplex_path;  // empty = built-in defaults
  double lambda = 1.0;          // extrinsic weight in the combined reward
  double noise = 0.0;           // simulated affect channel noise
  int synth_dialogues = 200;

  LmConfig lm{.vocab_size = 0, .d_model = 64, .n_layers = 2, .n_heads = 4, .max_seq_len = 64};
  int lm_vocab_cap = 512;
  LmTrainConfig lm_train{.epochs = 12, .batch_size = 32, .lr = 1e-3};
  RewardTrainConfig reward{};
  PoolMode reward_pool = PoolMode::LastToken;
  PpoConfig ppo{};
  int eval_samples = 200;
  int prompt_pool_size = 64;

  // Applies key=value pairs; throws on unknown keys or unparseable values.
  void apply(const std::map<std::string, std::string>& kv);
  std::map<std::string, std::string> to_map() const;
};

}  // namespace affectrl
