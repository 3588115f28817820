#include "affectrl/data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "affectrl/rng.hpp"
#include "phrase_bank.hpp"

namespace affectrl {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

// RFC 4180 CSV: quoted fields may contain commas, doubled quotes, and
// newlines. Returns rows of raw fields; the stream is consumed fully.
std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool row_has_content = false;
  char c;
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_has_content = true;
        break;
      case ',':
        row.push_back(field);
        field.clear();
        row_has_content = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_has_content || !field.empty()) {
          row.push_back(field);
          rows.push_back(row);
        }
        row.clear();
        field.clear();
        row_has_content = false;
        break;
      default:
        field.push_back(c);
        row_has_content = true;
    }
  }
  if (in_quotes) throw std::runtime_error("csv: unterminated quoted field");
  if (row_has_content || !field.empty()) {
    row.push_back(field);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

std::vector<Utterance> load_meld_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open MELD csv: " + path);
  const auto rows = parse_csv(in);
  if (rows.empty()) throw std::runtime_error("MELD csv has no header row: " + path);

  const std::vector<std::string> required = {"Utterance", "Emotion", "Speaker", "Dialogue_ID",
                                             "Utterance_ID"};
  const std::vector<std::string>& header = rows[0];
  std::vector<size_t> col(required.size());
  for (size_t i = 0; i < required.size(); ++i) {
    auto it = std::find(header.begin(), header.end(), required[i]);
    if (it == header.end())
      throw std::runtime_error("MELD csv missing required column: " + required[i]);
    col[i] = static_cast<size_t>(it - header.begin());
  }

  std::vector<Utterance> out;
  for (size_t r = 1; r < rows.size(); ++r) {
    const std::vector<std::string>& fields = rows[r];
    const std::string row_tag = "MELD csv row " + std::to_string(r);
    for (size_t idx : col)
      if (idx >= fields.size()) throw std::runtime_error(row_tag + ": too few fields");
    Utterance u;
    u.text = trim(fields[col[0]]);
    if (u.text.empty()) throw std::runtime_error(row_tag + ": empty utterance text");
    const std::string emotion_raw = trim(fields[col[1]]);
    auto label = parse_emotion(emotion_raw);
    if (!label)
      throw std::runtime_error(row_tag + ": unknown emotion label '" + emotion_raw + "'");
    u.emotion = *label;
    u.speaker = trim(fields[col[2]]);
    try {
      u.dialogue_id = std::stoi(fields[col[3]]);
      u.utterance_id = std::stoi(fields[col[4]]);
    } catch (const std::exception&) {
      throw std::runtime_error(row_tag + ": non-numeric dialogue/utterance id");
    }
    out.push_back(std::move(u));
  }
  return out;
}

std::vector<Utterance> synth_corpus(uint64_t seed, int n_dialogues) {
  if (n_dialogues < 1) throw std::invalid_argument("synth_corpus: need at least one dialogue");
  SplitMix64 rng(derive_seed(seed, "synth-corpus"));
  std::vector<Utterance> out;
  const auto& responses = phrase_bank::response_templates();
  for (int d = 0; d < n_dialogues; ++d) {
    const auto topic = phrase_bank::kTopics[rng.next_below(phrase_bank::kTopics.size())];
    const int turns = 2 + 2 * static_cast<int>(rng.next_below(3));  // 2, 4, or 6 utterances
    for (int t = 0; t < turns; ++t) {
      Utterance u;
      u.dialogue_id = d;
      u.utterance_id = t;
      if (t % 2 == 0) {
        u.speaker = "user";
        u.emotion = EmotionLabel::Neutral;  // questions carry no lexicon words
        const auto q = phrase_bank::kQuestions[rng.next_below(phrase_bank::kQuestions.size())];
        u.text = phrase_bank::fill_topic(q, topic);
      } else {
        u.speaker = "agent";
        u.emotion = static_cast<EmotionLabel>(rng.next_below(kEmotionCount));
        const auto& bank = responses[static_cast<size_t>(u.emotion)];
        u.text = phrase_bank::fill_topic(bank[rng.next_below(bank.size())], topic);
      }
      out.push_back(std::move(u));
    }
  }
  return out;
}

void save_corpus_jsonl(const std::vector<Utterance>& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write corpus: " + path);
  for (const Utterance& u : corpus) {
    nlohmann::json j;
    j["dialogue_id"] = u.dialogue_id;
    j["utterance_id"] = u.utterance_id;
    j["speaker"] = u.speaker;
    j["text"] = u.text;
    j["emotion"] = to_string(u.emotion);
    out << j.dump() << "\n";
  }
}

std::vector<Utterance> load_corpus_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus: " + path);
  std::vector<Utterance> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad record: " + e.what());
    }
    Utterance u;
    u.dialogue_id = j.at("dialogue_id").get<int>();
    u.utterance_id = j.at("utterance_id").get<int>();
    u.speaker = j.at("speaker").get<std::string>();
    u.text = j.at("text").get<std::string>();
    auto label = parse_emotion(j.at("emotion").get<std::string>());
    if (!label)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": unknown emotion label");
    u.emotion = *label;
    out.push_back(std::move(u));
  }
  return out;
}

std::array<int64_t, kEmotionCount> label_histogram(const std::vector<Utterance>& corpus) {
  std::array<int64_t, kEmotionCount> hist{};
  for (const Utterance& u : corpus) ++hist[static_cast<size_t>(u.emotion)];
  return hist;
}

std::vector<std::string> corpus_texts(const std::vector<Utterance>& corpus) {
  std::vector<std::string> texts;
  texts.reserve(corpus.size());
  for (const Utterance& u : corpus) texts.push_back(u.text);
  return texts;
}

std::vector<DialoguePair> make_dialogue_pairs(const std::vector<Utterance>& corpus,
                                              const Vocabulary& vocab, int max_seq_len) {
  std::vector<DialoguePair> pairs;
  for (size_t i = 0; i < corpus.size(); ++i) {
    const Utterance& u = corpus[i];
    DialoguePair pair;
    pair.label = u.emotion;
    const bool has_context = i > 0 && corpus[i - 1].dialogue_id == u.dialogue_id;
    if (has_context) {
      pair.prompt = vocab.encode(corpus[i - 1].text, /*add_bos=*/true, /*add_eos=*/false);
    } else {
      pair.prompt = {Vocabulary::kBos};
    }
    pair.response = vocab.encode(u.text, /*add_bos=*/false, /*add_eos=*/true);
    if (static_cast<int>(pair.response.size()) + 1 > max_seq_len) continue;
    const int budget = max_seq_len - static_cast<int>(pair.response.size());
    if (static_cast<int>(pair.prompt.size()) > budget) {
      // keep BOS plus the most recent context tokens
      std::vector<int> trimmed = {Vocabulary::kBos};
      trimmed.insert(trimmed.end(), pair.prompt.end() - (budget - 1), pair.prompt.end());
      pair.prompt = std::move(trimmed);
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

}  // namespace affectrl
