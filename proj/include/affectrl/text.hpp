#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace affectrl {

// Lowercased whitespace-and-punctuation word tokenizer. Runs of letters,
// digits, and apostrophes form one token; every other visible character is
// its own token.
std::vector<std::string> tokenize(const std::string& text);

// Token <-> id bijection with fixed reserved ids. Non-reserved ids are
// assigned by descending corpus frequency, ties broken lexicographically.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kReserved = 4;

  static Vocabulary build(const std::vector<std::string>& corpus, int max_size);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int id_of(const std::string& token) const;  // kUnk when absent
  const std::string& token_of(int id) const;
  bool contains(const std::string& token) const;

  std::vector<int> encode(const std::string& text, bool add_bos = true, bool add_eos = true) const;
  // Skips PAD/BOS/EOS, renders UNK as "<unk>", joins tokens with spaces.
  std::string decode(const std::vector<int>& ids) const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

}  // namespace affectrl
