#include "affectrl/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <stdexcept>

namespace affectrl {

namespace {

bool is_word_char(unsigned char c) {
  // Bytes >= 0x80 stay word characters so UTF-8 sequences are not split.
  return std::isalnum(c) || c == '\'' || c >= 0x80;
}

const std::string kReservedNames[] = {"<pad>", "<unk>", "<bos>", "<eos>"};

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!current.empty()) {
        tokens.push_back(current);
        current.clear();
      }
    } else if (is_word_char(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      if (!current.empty()) {
        tokens.push_back(current);
        current.clear();
      }
      tokens.push_back(std::string(1, static_cast<char>(c)));
    }
  }
  if (!current.empty()) tokens.push_back(current);
  return tokens;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus, int max_size) {
  if (max_size < kReserved + 1)
    throw std::invalid_argument("vocabulary max_size must be at least 5");
  if (corpus.empty()) throw std::invalid_argument("vocabulary build: empty corpus");

  std::map<std::string, int64_t> counts;  // ordered map keeps ties lexicographic
  for (const std::string& text : corpus)
    for (const std::string& tok : tokenize(text)) ++counts[tok];
  if (counts.empty()) throw std::invalid_argument("vocabulary build: corpus has no tokens");

  std::vector<std::pair<std::string, int64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocabulary vocab;
  for (const std::string& name : kReservedNames) vocab.id_to_token_.push_back(name);
  const size_t keep = std::min(ranked.size(), static_cast<size_t>(max_size - kReserved));
  for (size_t i = 0; i < keep; ++i) {
    vocab.token_to_id_[ranked[i].first] = static_cast<int>(vocab.id_to_token_.size());
    vocab.id_to_token_.push_back(ranked[i].first);
  }
  return vocab;
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("vocabulary: id out of range");
  return id_to_token_[static_cast<size_t>(id)];
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.count(token) != 0;
}

std::vector<int> Vocabulary::encode(const std::string& text, bool add_bos, bool add_eos) const {
  std::vector<int> ids;
  if (add_bos) ids.push_back(kBos);
  for (const std::string& tok : tokenize(text)) ids.push_back(id_of(tok));
  if (add_eos) ids.push_back(kEos);
  return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= size()) throw std::out_of_range("vocabulary decode: id out of range");
    if (id == kPad || id == kBos || id == kEos) continue;
    if (!out.empty()) out.push_back(' ');
    out += id_to_token_[static_cast<size_t>(id)];
  }
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary: " + path);
  out << "affectrl-vocab 1\n" << size() << "\n";
  for (int i = kReserved; i < size(); ++i) out << id_to_token_[static_cast<size_t>(i)] << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocabulary: " + path);
  std::string header;
  std::getline(in, header);
  if (header != "affectrl-vocab 1")
    throw std::runtime_error("unsupported vocabulary format in " + path);
  std::string count_line;
  std::getline(in, count_line);
  const int total = std::stoi(count_line);
  Vocabulary vocab;
  for (const std::string& name : kReservedNames) vocab.id_to_token_.push_back(name);
  std::string token;
  while (std::getline(in, token)) {
    if (token.empty()) continue;
    vocab.token_to_id_[token] = static_cast<int>(vocab.id_to_token_.size());
    vocab.id_to_token_.push_back(token);
  }
  if (vocab.size() != total)
    throw std::runtime_error("vocabulary file truncated: " + path);
  return vocab;
}

}  // namespace affectrl
