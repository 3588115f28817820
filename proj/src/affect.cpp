#include "affectrl/affect.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace affectrl {

namespace {

const std::array<std::string, kEmotionCount> kLabelNames = {
    "anger", "disgust", "sadness", "joy", "neutral", "surprise", "fear"};

std::string lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

void check_point(const AffectPoint& p) {
  if (!(p.arousal >= -1.0 && p.arousal <= 1.0 && p.valence >= -1.0 && p.valence <= 1.0))
    throw std::invalid_argument("affect point components must lie in [-1, 1]");
}

}  // namespace

const std::string& to_string(EmotionLabel label) {
  return kLabelNames[static_cast<size_t>(label)];
}

std::optional<EmotionLabel> parse_emotion(const std::string& text) {
  const std::string key = lower(text);
  for (int i = 0; i < kEmotionCount; ++i)
    if (kLabelNames[static_cast<size_t>(i)] == key) return static_cast<EmotionLabel>(i);
  return std::nullopt;
}

CircumplexTable CircumplexTable::defaults() {
  // Qualitative quadrant placement of Russell's model; Surprise gets a small
  // positive valence so its reward sign is well defined.
  return from_entries({
      {EmotionLabel::Joy, {0.50, 0.80}},
      {EmotionLabel::Surprise, {0.80, 0.20}},
      {EmotionLabel::Neutral, {0.0, 0.0}},
      {EmotionLabel::Anger, {0.70, -0.60}},
      {EmotionLabel::Fear, {0.75, -0.70}},
      {EmotionLabel::Disgust, {0.40, -0.65}},
      {EmotionLabel::Sadness, {-0.40, -0.70}},
  });
}

CircumplexTable CircumplexTable::from_entries(
    const std::vector<std::pair<EmotionLabel, AffectPoint>>& entries) {
  CircumplexTable table;
  std::array<bool, kEmotionCount> seen{};
  for (const auto& [label, point] : entries) {
    check_point(point);
    const size_t idx = static_cast<size_t>(label);
    if (seen[idx]) throw std::invalid_argument("circumplex table: duplicate label " + to_string(label));
    seen[idx] = true;
    table.points_[idx] = point;
  }
  for (int i = 0; i < kEmotionCount; ++i)
    if (!seen[static_cast<size_t>(i)])
      throw std::invalid_argument("circumplex table: missing label " +
                                  to_string(static_cast<EmotionLabel>(i)));
  const AffectPoint& n = table.points_[static_cast<size_t>(EmotionLabel::Neutral)];
  if (n.arousal != 0.0 || n.valence != 0.0)
    throw std::invalid_argument("circumplex table: neutral must map to (0, 0)");
  return table;
}

CircumplexTable load_circumplex(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open circumplex table: " + path);
  std::vector<std::pair<EmotionLabel, AffectPoint>> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::string key, eq;
    double a = 0.0, v = 0.0;
    std::istringstream ss(line);
    if (!(ss >> key)) continue;  // blank line
    if (!(ss >> eq) || eq != "=" || !(ss >> a >> v))
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected 'label = arousal valence'");
    auto label = parse_emotion(key);
    if (!label)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": unknown label '" + key + "'");
    entries.emplace_back(*label, AffectPoint{a, v});
  }
  return CircumplexTable::from_entries(entries);
}

void save_circumplex(const CircumplexTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write circumplex table: " + path);
  for (EmotionLabel label : kAllEmotions) {
    const AffectPoint& p = table[label];
    out << to_string(label) << " = " << p.arousal << " " << p.valence << "\n";
  }
}

double circumplex_reward(const AffectPoint& point) {
  check_point(point);
  const double magnitude = std::sqrt(point.arousal * point.arousal + point.valence * point.valence);
  return point.valence < 0.0 ? -magnitude : magnitude;
}

double label_reward(EmotionLabel label, const CircumplexTable& table) {
  return circumplex_reward(table[label]);
}

AffectPoint fuse_affect(const std::vector<std::pair<AffectPoint, double>>& estimates) {
  if (estimates.empty()) throw std::invalid_argument("fuse_affect: no estimates");
  double wsum = 0.0, a = 0.0, v = 0.0;
  for (const auto& [point, weight] : estimates) {
    if (weight < 0.0) throw std::invalid_argument("fuse_affect: negative weight");
    wsum += weight;
    a += weight * point.arousal;
    v += weight * point.valence;
  }
  if (wsum <= 0.0) throw std::invalid_argument("fuse_affect: total weight must be positive");
  return {std::clamp(a / wsum, -1.0, 1.0), std::clamp(v / wsum, -1.0, 1.0)};
}

double sam_to_unit(int rating) {
  if (rating < 1 || rating > 9) throw std::invalid_argument("sam rating must be in 1..9");
  return (rating - 5) / 4.0;
}

double combine_rewards(double extrinsic, double intrinsic, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("combine_rewards: lambda must be in [0, 1]");
  return lambda * extrinsic + (1.0 - lambda) * intrinsic;
}

}  // namespace affectrl
