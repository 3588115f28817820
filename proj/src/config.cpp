#include "affectrl/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace affectrl {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': bad number '" + value + "'");
  }
}

int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': bad integer '" + value + "'");
  }
}

std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
    kv[key] = value;
  }
  return kv;
}

std::map<std::string, std::string> load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string serialize_config(const std::map<std::string, std::string>& kv) {
  std::ostringstream out;
  for (const auto& [key, value] : kv) out << key << " = " << value << "\n";
  return out.str();
}

void RunConfig::apply(const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "seed") seed = static_cast<uint64_t>(parse_int(key, value));
    else if (key == "out_dir") out_dir = value;
    else if (key == "corpus") corpus_path = value;
    else if (key == "vocab") vocab_path = value;
    else if (key == "lexicon") lexicon_path = value;
    else if (key == "circumplex") circumplex_path = value;
    else if (key == "lambda") lambda = parse_double(key, value);
    else if (key == "noise") noise = parse_double(key, value);
    else if (key == "synth.dialogues") synth_dialogues = static_cast<int>(parse_int(key, value));
    else if (key == "lm.d_model") lm.d_model = static_cast<int>(parse_int(key, value));
    else if (key == "lm.n_layers") lm.n_layers = static_cast<int>(parse_int(key, value));
    else if (key == "lm.n_heads") lm.n_heads = static_cast<int>(parse_int(key, value));
    else if (key == "lm.max_seq_len") lm.max_seq_len = static_cast<int>(parse_int(key, value));
    else if (key == "lm.vocab_cap") lm_vocab_cap = static_cast<int>(parse_int(key, value));
    else if (key == "lm_train.epochs") lm_train.epochs = static_cast<int>(parse_int(key, value));
    else if (key == "lm_train.batch") lm_train.batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "lm_train.lr") lm_train.lr = parse_double(key, value);
    else if (key == "reward.epochs") reward.epochs = static_cast<int>(parse_int(key, value));
    else if (key == "reward.batch") reward.batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "reward.lr") reward.lr = parse_double(key, value);
    else if (key == "reward.mu") reward.mu = parse_double(key, value);
    else if (key == "reward.holdout") reward.holdout = parse_double(key, value);
    else if (key == "reward.pool") {
      if (value == "last") reward_pool = PoolMode::LastToken;
      else if (value == "mean") reward_pool = PoolMode::Mean;
      else throw std::invalid_argument("config key 'reward.pool': expected last|mean");
    } else if (key == "ppo.beta0") ppo.beta0 = parse_double(key, value);
    else if (key == "ppo.beta_mode") {
      if (value == "fixed") ppo.beta_mode = PpoConfig::BetaMode::Fixed;
      else if (value == "adaptive") ppo.beta_mode = PpoConfig::BetaMode::Adaptive;
      else throw std::invalid_argument("config key 'ppo.beta_mode': expected fixed|adaptive");
    } else if (key == "ppo.kl_target") ppo.kl_target = parse_double(key, value);
    else if (key == "ppo.clip") ppo.clip = parse_double(key, value);
    else if (key == "ppo.policy_lr") ppo.policy_lr = parse_double(key, value);
    else if (key == "ppo.value_lr") ppo.value_lr = parse_double(key, value);
    else if (key == "ppo.episodes") ppo.episodes = static_cast<int>(parse_int(key, value));
    else if (key == "ppo.rollouts") ppo.rollouts_per_episode = static_cast<int>(parse_int(key, value));
    else if (key == "ppo.epochs") ppo.ppo_epochs = static_cast<int>(parse_int(key, value));
    else if (key == "ppo.minibatch") ppo.minibatch_size = static_cast<int>(parse_int(key, value));
    else if (key == "ppo.gamma") ppo.gamma = parse_double(key, value);
    else if (key == "ppo.gae_lambda") ppo.gae_lambda = parse_double(key, value);
    else if (key == "ppo.max_new") ppo.max_response_len = static_cast<int>(parse_int(key, value));
    else if (key == "ppo.top_k") ppo.top_k = static_cast<int>(parse_int(key, value));
    else if (key == "ppo.temperature") ppo.temperature = parse_double(key, value);
    else if (key == "ppo.checkpoint_every") ppo.checkpoint_every = static_cast<int>(parse_int(key, value));
    else if (key == "ppo.refresh_reward") {
      if (value == "true" || value == "1") ppo.refresh_reward_model = true;
      else if (value == "false" || value == "0") ppo.refresh_reward_model = false;
      else throw std::invalid_argument("config key 'ppo.refresh_reward': expected true|false");
    } else if (key == "eval.samples") eval_samples = static_cast<int>(parse_int(key, value));
    else if (key == "prompt_pool") prompt_pool_size = static_cast<int>(parse_int(key, value));
    else throw std::invalid_argument("unknown config key: " + key);
  }
}

std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> kv;
  kv["seed"] = std::to_string(seed);
  kv["out_dir"] = out_dir;
  kv["corpus"] = corpus_path;
  kv["vocab"] = vocab_path;
  kv["lexicon"] = lexicon_path;
  kv["circumplex"] = circumplex_path;
  kv["lambda"] = format_double(lambda);
  kv["noise"] = format_double(noise);
  kv["synth.dialogues"] = std::to_string(synth_dialogues);
  kv["lm.d_model"] = std::to_string(lm.d_model);
  kv["lm.n_layers"] = std::to_string(lm.n_layers);
  kv["lm.n_heads"] = std::to_string(lm.n_heads);
  kv["lm.max_seq_len"] = std::to_string(lm.max_seq_len);
  kv["lm.vocab_cap"] = std::to_string(lm_vocab_cap);
  kv["lm_train.epochs"] = std::to_string(lm_train.epochs);
  kv["lm_train.batch"] = std::to_string(lm_train.batch_size);
  kv["lm_train.lr"] = format_double(lm_train.lr);
  kv["reward.epochs"] = std::to_string(reward.epochs);
  kv["reward.batch"] = std::to_string(reward.batch_size);
  kv["reward.lr"] = format_double(reward.lr);
  kv["reward.mu"] = format_double(reward.mu);
  kv["reward.holdout"] = format_double(reward.holdout);
  kv["reward.pool"] = reward_pool == PoolMode::LastToken ? "last" : "mean";
  kv["ppo.beta0"] = format_double(ppo.beta0);
  kv["ppo.beta_mode"] = ppo.beta_mode == PpoConfig::BetaMode::Fixed ? "fixed" : "adaptive";
  kv["ppo.kl_target"] = format_double(ppo.kl_target);
  kv["ppo.clip"] = format_double(ppo.clip);
  kv["ppo.policy_lr"] = format_double(ppo.policy_lr);
  kv["ppo.value_lr"] = format_double(ppo.value_lr);
  kv["ppo.episodes"] = std::to_string(ppo.episodes);
  kv["ppo.rollouts"] = std::to_string(ppo.rollouts_per_episode);
  kv["ppo.epochs"] = std::to_string(ppo.ppo_epochs);
  kv["ppo.minibatch"] = std::to_string(ppo.minibatch_size);
  kv["ppo.gamma"] = format_double(ppo.gamma);
  kv["ppo.gae_lambda"] = format_double(ppo.gae_lambda);
  kv["ppo.max_new"] = std::to_string(ppo.max_response_len);
  kv["ppo.top_k"] = std::to_string(ppo.top_k);
  kv["ppo.temperature"] = format_double(ppo.temperature);
  kv["ppo.checkpoint_every"] = std::to_string(ppo.checkpoint_every);
  kv["ppo.refresh_reward"] = ppo.refresh_reward_model ? "true" : "false";
  kv["eval.samples"] = std::to_string(eval_samples);
  kv["prompt_pool"] = std::to_string(prompt_pool_size);
  return kv;
}

}  // namespace affectrl
