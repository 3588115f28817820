#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace affectrl {

// The seven MELD utterance-level emotion labels.
enum class EmotionLabel { Anger, Disgust, Sadness, Joy, Neutral, Surprise, Fear };
inline constexpr int kEmotionCount = 7;
inline constexpr std::array<EmotionLabel, kEmotionCount> kAllEmotions = {
    EmotionLabel::Anger,   EmotionLabel::Disgust,  EmotionLabel::Sadness, EmotionLabel::Joy,
    EmotionLabel::Neutral, EmotionLabel::Surprise, EmotionLabel::Fear};

const std::string& to_string(EmotionLabel label);
// Case-insensitive; nullopt for anything outside the seven-label set.
std::optional<EmotionLabel> parse_emotion(const std::string& text);

// A point in the circumplex plane: arousal (activation) and valence
// (pleasant/unpleasant), both in [-1, 1].
struct AffectPoint {
  double arousal = 0.0;
  double valence = 0.0;
};

// Total map from emotion label to circumplex coordinates. Neutral must sit
// at the origin and every component must stay within [-1, 1].
class CircumplexTable {
 public:
  static CircumplexTable defaults();
  // Builds from explicit entries; throws unless all 7 labels are covered,
  // components are in bounds, and Neutral is exactly (0, 0).
  static CircumplexTable from_entries(const std::vector<std::pair<EmotionLabel, AffectPoint>>& entries);

  const AffectPoint& operator[](EmotionLabel label) const {
    return points_[static_cast<size_t>(label)];
  }

 private:
  std::array<AffectPoint, kEmotionCount> points_{};
};

// Key-value text file "label = arousal valence", one line per label.
CircumplexTable load_circumplex(const std::string& path);
void save_circumplex(const CircumplexTable& table, const std::string& path);

// Signed distance reward: sign(valence) * sqrt(arousal^2 + valence^2),
// with sign(0) taken as +. Bounded by sqrt(2).
double circumplex_reward(const AffectPoint& point);
double label_reward(EmotionLabel label, const CircumplexTable& table);

// Confidence-weighted mean of affect estimates, clamped to bounds.
AffectPoint fuse_affect(const std::vector<std::pair<AffectPoint, double>>& estimates);

// Maps a 1..9 self-assessment rating onto [-1, 1].
double sam_to_unit(int rating);

// lambda * extrinsic + (1 - lambda) * intrinsic.
double combine_rewards(double extrinsic, double intrinsic, double lambda);

}  // namespace affectrl
