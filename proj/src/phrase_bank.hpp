#pragma once

#include <array>
#include <string_view>
#include <vector>

#include "affectrl/affect.hpp"

// Shared template material for the synthetic corpus, the prompt pool, and
// the default emotion lexicon. Response templates use only their own
// label's lexicon words; question and filler words appear in no lexicon.

namespace affectrl::phrase_bank {

inline constexpr std::array<std::string_view, 12> kTopics = {
    "the party",   "the weather", "work",        "the movie",  "dinner",      "the game",
    "the trip",    "the meeting", "school",      "the concert", "the garden", "the morning"};

inline constexpr std::array<std::string_view, 5> kQuestions = {
    "how was {topic} ?", "tell me about {topic} .", "what do you think about {topic} ?",
    "how did {topic} go ?", "any news about {topic} ?"};

struct LexiconEntry {
  std::string_view word;
  EmotionLabel label;
};

inline constexpr std::array<LexiconEntry, 44> kLexicon = {{
    {"happy", EmotionLabel::Joy},
    {"wonderful", EmotionLabel::Joy},
    {"great", EmotionLabel::Joy},
    {"glad", EmotionLabel::Joy},
    {"joyful", EmotionLabel::Joy},
    {"delighted", EmotionLabel::Joy},
    {"fantastic", EmotionLabel::Joy},
    {"lovely", EmotionLabel::Joy},
    {"wow", EmotionLabel::Surprise},
    {"surprising", EmotionLabel::Surprise},
    {"amazed", EmotionLabel::Surprise},
    {"unexpected", EmotionLabel::Surprise},
    {"astonishing", EmotionLabel::Surprise},
    {"unbelievable", EmotionLabel::Surprise},
    {"okay", EmotionLabel::Neutral},
    {"fine", EmotionLabel::Neutral},
    {"usual", EmotionLabel::Neutral},
    {"ordinary", EmotionLabel::Neutral},
    {"normal", EmotionLabel::Neutral},
    {"regular", EmotionLabel::Neutral},
    {"angry", EmotionLabel::Anger},
    {"furious", EmotionLabel::Anger},
    {"annoying", EmotionLabel::Anger},
    {"mad", EmotionLabel::Anger},
    {"outraged", EmotionLabel::Anger},
    {"irritating", EmotionLabel::Anger},
    {"scary", EmotionLabel::Fear},
    {"afraid", EmotionLabel::Fear},
    {"terrified", EmotionLabel::Fear},
    {"frightening", EmotionLabel::Fear},
    {"nervous", EmotionLabel::Fear},
    {"dreadful", EmotionLabel::Fear},
    {"disgusting", EmotionLabel::Disgust},
    {"gross", EmotionLabel::Disgust},
    {"nasty", EmotionLabel::Disgust},
    {"awful", EmotionLabel::Disgust},
    {"yuck", EmotionLabel::Disgust},
    {"revolting", EmotionLabel::Disgust},
    {"sad", EmotionLabel::Sadness},
    {"gloomy", EmotionLabel::Sadness},
    {"miserable", EmotionLabel::Sadness},
    {"crying", EmotionLabel::Sadness},
    {"heartbroken", EmotionLabel::Sadness},
    {"lonely", EmotionLabel::Sadness},
}};

inline const std::array<std::vector<std::string_view>, kEmotionCount>& response_templates() {
  static const std::array<std::vector<std::string_view>, kEmotionCount> templates = [] {
    std::array<std::vector<std::string_view>, kEmotionCount> t;
    auto set = [&t](EmotionLabel label, std::vector<std::string_view> v) {
      t[static_cast<size_t>(label)] = std::move(v);
    };
    set(EmotionLabel::Joy, {"i feel so happy about {topic} , it was wonderful",
                            "{topic} was great , i am glad",
                            "what a lovely time at {topic} , i am delighted",
                            "i am joyful today , {topic} was fantastic"});
    set(EmotionLabel::Surprise, {"wow , {topic} was so surprising",
                                 "i am amazed , {topic} was unexpected",
                                 "{topic} left me astonished , wow",
                                 "honestly {topic} was unbelievable , i am amazed"});
    set(EmotionLabel::Neutral, {"{topic} was okay , nothing special",
                                "{topic} went fine , same as usual",
                                "it was an ordinary day , {topic} was normal",
                                "{topic} was regular , nothing to report"});
    set(EmotionLabel::Anger, {"{topic} made me so angry , i am furious",
                              "i am mad about {topic} , it was annoying",
                              "{topic} was irritating , i feel outraged",
                              "honestly {topic} made me furious , so annoying"});
    set(EmotionLabel::Fear, {"{topic} was scary , i am afraid",
                             "i feel terrified about {topic} , it was frightening",
                             "i am nervous about {topic} , it felt dreadful",
                             "{topic} left me afraid , truly scary"});
    set(EmotionLabel::Disgust, {"{topic} was disgusting , just gross",
                                "yuck , {topic} was nasty",
                                "i found {topic} revolting , truly awful",
                                "{topic} smelled nasty , so gross"});
    set(EmotionLabel::Sadness, {"{topic} made me sad , i feel gloomy",
                                "i am miserable about {topic} , i feel like crying",
                                "{topic} left me heartbroken , so sad",
                                "i feel lonely after {topic} , it was gloomy"});
    return t;
  }();
  return templates;
}

inline std::string fill_topic(std::string_view tmpl, std::string_view topic) {
  std::string out;
  const std::string_view slot = "{topic}";
  size_t pos = 0;
  while (pos < tmpl.size()) {
    const size_t hit = tmpl.find(slot, pos);
    if (hit == std::string_view::npos) {
      out += tmpl.substr(pos);
      break;
    }
    out += tmpl.substr(pos, hit - pos);
    out += topic;
    pos = hit + slot.size();
  }
  return out;
}

}  // namespace affectrl::phrase_bank
