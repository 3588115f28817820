#pragma once

#include <string>
#include <utility>
#include <vector>

#include "affectrl/lm.hpp"
#include "affectrl/tensor.hpp"

namespace affectrl {

// Versioned binary container: fixed-layout header (format version + LM
// config) followed by named parameter blocks of little-endian 64-bit
// floats. Extra heads (reward, value) ride along as additional blocks.
struct Checkpoint {
  static constexpr uint32_t kVersion = 1;
  LmConfig config;
  std::vector<std::pair<std::string, Tensor>> blocks;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
// Parses and validates the whole file before returning; a truncated or
// corrupt file yields an error and no partial checkpoint.
Checkpoint load_checkpoint(const std::string& path);

Checkpoint checkpoint_from_lm(const TransformerLM& model);
TransformerLM lm_from_checkpoint(const Checkpoint& ckpt);

}  // namespace affectrl
