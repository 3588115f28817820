#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "affectrl/affect.hpp"

namespace affectrl {

// Word -> (label, weight) map with a fixed tie-break priority over labels.
struct EmotionLexicon {
  std::unordered_map<std::string, std::pair<EmotionLabel, double>> words;
  // positive emotions first; earlier entries win ties
  std::array<EmotionLabel, kEmotionCount> priority = {
      EmotionLabel::Joy,     EmotionLabel::Surprise, EmotionLabel::Neutral,
      EmotionLabel::Anger,   EmotionLabel::Fear,     EmotionLabel::Disgust,
      EmotionLabel::Sadness};

  static EmotionLexicon defaults();
};

// Text lines "word<TAB>label<TAB>weight"; unknown labels and non-positive
// weights are rejected.
EmotionLexicon load_lexicon(const std::string& path);
void save_lexicon(const EmotionLexicon& lexicon, const std::string& path);

// Label with the highest total word weight; Neutral when nothing matches;
// ties resolved by the lexicon's priority order.
EmotionLabel classify_emotion_lexicon(const std::string& text, const EmotionLexicon& lexicon);

// Three simulated modality estimates (speech 0.5, face 0.3, gesture 0.2):
// the label's circumplex point plus independent uniform noise per component.
std::vector<std::pair<AffectPoint, double>> simulate_channels(EmotionLabel label,
                                                              const CircumplexTable& table,
                                                              double noise, uint64_t seed);

struct UserFeedback {
  EmotionLabel label = EmotionLabel::Neutral;
  AffectPoint fused;
  int sam_rating = 5;
  double reward = 0.0;
};

// Full simulated-user turn: lexicon oracle label, fused channel estimates,
// a SAM self-assessment derived from the label reward, and the combined
// extrinsic/intrinsic reward.
UserFeedback respond(const std::string& response_text, const EmotionLexicon& lexicon,
                     const CircumplexTable& table, double lambda, double noise, uint64_t seed);

// Deterministic pool of template prompts spanning the synthetic topics.
std::vector<std::string> prompt_pool(uint64_t seed, int n);

}  // namespace affectrl
