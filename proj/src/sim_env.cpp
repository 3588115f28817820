#include "affectrl/sim_env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "affectrl/rng.hpp"
#include "affectrl/text.hpp"
#include "phrase_bank.hpp"

namespace affectrl {

EmotionLexicon EmotionLexicon::defaults() {
  EmotionLexicon lex;
  for (const auto& entry : phrase_bank::kLexicon)
    lex.words.emplace(std::string(entry.word), std::make_pair(entry.label, 1.0));
  return lex;
}

EmotionLexicon load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open lexicon: " + path);
  EmotionLexicon lex;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string word, label_text, weight_text;
    if (!std::getline(ss, word, '\t') || !std::getline(ss, label_text, '\t') ||
        !std::getline(ss, weight_text))
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected 'word<TAB>label<TAB>weight'");
    auto label = parse_emotion(label_text);
    if (!label)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": unknown label '" +
                               label_text + "'");
    double weight = 0.0;
    try {
      weight = std::stod(weight_text);
    } catch (const std::exception&) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad weight");
    }
    if (!(weight > 0.0))
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": weight must be > 0");
    lex.words[word] = {*label, weight};
  }
  return lex;
}

void save_lexicon(const EmotionLexicon& lexicon, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write lexicon: " + path);
  std::vector<std::string> keys;
  keys.reserve(lexicon.words.size());
  for (const auto& [word, entry] : lexicon.words) keys.push_back(word);
  std::sort(keys.begin(), keys.end());
  for (const std::string& word : keys) {
    const auto& [label, weight] = lexicon.words.at(word);
    out << word << "\t" << to_string(label) << "\t" << weight << "\n";
  }
}

EmotionLabel classify_emotion_lexicon(const std::string& text, const EmotionLexicon& lexicon) {
  std::array<double, kEmotionCount> scores{};
  for (const std::string& token : tokenize(text)) {
    auto it = lexicon.words.find(token);
    if (it != lexicon.words.end()) scores[static_cast<size_t>(it->second.first)] += it->second.second;
  }
  EmotionLabel best = EmotionLabel::Neutral;
  double best_score = 0.0;
  for (EmotionLabel label : lexicon.priority) {
    const double s = scores[static_cast<size_t>(label)];
    if (s > best_score) {
      best = label;
      best_score = s;
    }
  }
  return best_score > 0.0 ? best : EmotionLabel::Neutral;
}

std::vector<std::pair<AffectPoint, double>> simulate_channels(EmotionLabel label,
                                                              const CircumplexTable& table,
                                                              double noise, uint64_t seed) {
  if (noise < 0.0) throw std::invalid_argument("simulate_channels: negative noise");
  constexpr double kWeights[3] = {0.5, 0.3, 0.2};  // speech, face, gesture
  SplitMix64 rng(derive_seed(seed, "affect-channels"));
  const AffectPoint& base = table[label];
  std::vector<std::pair<AffectPoint, double>> channels;
  channels.reserve(3);
  for (double w : kWeights) {
    AffectPoint p;
    p.arousal = std::clamp(base.arousal + rng.uniform(-noise, noise), -1.0, 1.0);
    p.valence = std::clamp(base.valence + rng.uniform(-noise, noise), -1.0, 1.0);
    channels.emplace_back(p, w);
  }
  return channels;
}

UserFeedback respond(const std::string& response_text, const EmotionLexicon& lexicon,
                     const CircumplexTable& table, double lambda, double noise, uint64_t seed) {
  UserFeedback fb;
  fb.label = classify_emotion_lexicon(response_text, lexicon);
  fb.fused = fuse_affect(simulate_channels(fb.label, table, noise, seed));

  const double extrinsic = label_reward(fb.label, table);
  const double sign = extrinsic < 0.0 ? -1.0 : (extrinsic > 0.0 ? 1.0 : 0.0);
  const double strength = std::min(1.0, std::fabs(extrinsic) / std::sqrt(2.0));
  fb.sam_rating = std::clamp(static_cast<int>(std::lround(5.0 + 4.0 * sign * strength)), 1, 9);
  fb.reward = combine_rewards(extrinsic, sam_to_unit(fb.sam_rating), lambda);
  return fb;
}

std::vector<std::string> prompt_pool(uint64_t seed, int n) {
  if (n < 1) throw std::invalid_argument("prompt_pool: n must be >= 1");
  SplitMix64 rng(derive_seed(seed, "prompt-pool"));
  std::vector<std::string> prompts;
  prompts.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto topic = phrase_bank::kTopics[rng.next_below(phrase_bank::kTopics.size())];
    const auto q = phrase_bank::kQuestions[rng.next_below(phrase_bank::kQuestions.size())];
    prompts.push_back(phrase_bank::fill_topic(q, topic));
  }
  return prompts;
}

}  // namespace affectrl
