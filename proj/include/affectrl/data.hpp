#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "affectrl/affect.hpp"
#include "affectrl/text.hpp"

namespace affectrl {

// One emotion-annotated dialogue turn.
struct Utterance {
  int dialogue_id = 0;
  int utterance_id = 0;
  std::string speaker;
  std::string text;
  EmotionLabel emotion = EmotionLabel::Neutral;
};

// Parses a MELD-format CSV (header row, standard quoting). Requires the
// columns Utterance, Emotion, Speaker, Dialogue_ID, Utterance_ID; extra
// columns are ignored. Rejects unknown emotion strings with the row number.
std::vector<Utterance> load_meld_csv(const std::string& path);

// Deterministic template-generated dialogues. Every utterance's text
// carries lexicon words of its own label only, so the lexicon oracle and
// the annotation agree by construction.
std::vector<Utterance> synth_corpus(uint64_t seed, int n_dialogues);

// Line-delimited records {dialogue_id, utterance_id, speaker, text, emotion}.
void save_corpus_jsonl(const std::vector<Utterance>& corpus, const std::string& path);
std::vector<Utterance> load_corpus_jsonl(const std::string& path);

std::array<int64_t, kEmotionCount> label_histogram(const std::vector<Utterance>& corpus);
std::vector<std::string> corpus_texts(const std::vector<Utterance>& corpus);

// One LM training example: previous utterance -> next utterance within a
// dialogue; dialogue-opening utterances pair with a BOS-only prompt. The
// label is the response's gold emotion.
struct DialoguePair {
  std::vector<int> prompt;    // starts with BOS
  std::vector<int> response;  // ends with EOS
  EmotionLabel label = EmotionLabel::Neutral;
};

// Builds pairs in corpus order. Overlong prompts are trimmed from the left
// (keeping BOS); pairs whose response alone cannot fit are dropped.
std::vector<DialoguePair> make_dialogue_pairs(const std::vector<Utterance>& corpus,
                                              const Vocabulary& vocab, int max_seq_len);

}  // namespace affectrl
