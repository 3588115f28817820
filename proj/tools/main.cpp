#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "affectrl/checkpoint.hpp"
#include "affectrl/config.hpp"
#include "affectrl/data.hpp"
#include "affectrl/lm.hpp"
#include "affectrl/ppo.hpp"
#include "affectrl/reward_model.hpp"
#include "affectrl/rng.hpp"
#include "affectrl/sim_env.hpp"
#include "affectrl/text.hpp"

namespace fs = std::filesystem;
using namespace affectrl;
using nlohmann::json;

namespace {

// exit 2; everything else that escapes is a runtime failure (exit 1)
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonFlags {
  std::string config_file;
  std::string out_dir;
  std::vector<std::string> overrides;  // key=value pairs
  int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_file, "key=value config file");
  cmd->add_option("-o,--out", flags.out_dir, "output directory (or AFFECTRL_OUT)");
  cmd->add_option("--seed", flags.seed, "master seed");
  cmd->add_option("--set", flags.overrides, "override a config key, e.g. --set ppo.episodes=10");
}

RunConfig resolve_config(const CommonFlags& flags,
                         const std::map<std::string, std::string>& extra = {}) {
  RunConfig cfg;
  try {
    if (!flags.config_file.empty()) cfg.apply(load_config_file(flags.config_file));
    std::map<std::string, std::string> kv;
    for (const std::string& item : flags.overrides) {
      const size_t eq = item.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got: " + item);
      kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
    for (const auto& [k, v] : extra) kv[k] = v;
    cfg.apply(kv);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (flags.seed >= 0) cfg.seed = static_cast<uint64_t>(flags.seed);
  if (!flags.out_dir.empty()) {
    cfg.out_dir = flags.out_dir;
  } else if (cfg.out_dir.empty()) {
    const char* env = std::getenv("AFFECTRL_OUT");
    cfg.out_dir = env != nullptr ? env : "out";
  }
  return cfg;
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
  return (fs::path(cfg.out_dir) / name).string();
}

void write_resolved_config(const RunConfig& cfg, const std::string& stage) {
  fs::create_directories(cfg.out_dir);
  std::ofstream out(out_path(cfg, "config_" + stage + ".resolved"));
  if (!out) throw std::runtime_error("cannot write resolved config");
  out << serialize_config(cfg.to_map());
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw UsageError("missing " + what + ": " + path);
}

EmotionLexicon resolve_lexicon(const RunConfig& cfg) {
  if (cfg.lexicon_path.empty()) return EmotionLexicon::defaults();
  require_file(cfg.lexicon_path, "lexicon file");
  return load_lexicon(cfg.lexicon_path);
}

CircumplexTable resolve_table(const RunConfig& cfg) {
  if (cfg.circumplex_path.empty()) return CircumplexTable::defaults();
  require_file(cfg.circumplex_path, "circumplex table");
  return load_circumplex(cfg.circumplex_path);
}

std::string corpus_file(const RunConfig& cfg) {
  return cfg.corpus_path.empty() ? out_path(cfg, "corpus.jsonl") : cfg.corpus_path;
}
std::string vocab_file(const RunConfig& cfg) {
  return cfg.vocab_path.empty() ? out_path(cfg, "vocab.txt") : cfg.vocab_path;
}

// prompts for PPO/eval: encoded questions that leave room to generate
std::vector<std::vector<int>> build_prompt_pool(const RunConfig& cfg, const Vocabulary& vocab) {
  const auto texts = prompt_pool(derive_seed(cfg.seed, "prompt-pool"), cfg.prompt_pool_size);
  std::vector<std::vector<int>> prompts;
  for (const std::string& text : texts) {
    auto ids = vocab.encode(text, /*add_bos=*/true, /*add_eos=*/false);
    if (static_cast<int>(ids.size()) + cfg.ppo.max_response_len <= cfg.lm.max_seq_len)
      prompts.push_back(std::move(ids));
  }
  if (prompts.empty()) throw std::runtime_error("prompt pool is empty after length filtering");
  return prompts;
}

RewardHead head_from_checkpoint(const Checkpoint& ckpt) {
  const Tensor* w = ckpt.find("reward_head.w");
  const Tensor* b = ckpt.find("reward_head.b");
  if (w == nullptr || b == nullptr)
    throw std::runtime_error("checkpoint carries no reward head blocks");
  RewardHead head;
  head.w = w->clone();
  head.b = b->clone();
  head.w.set_requires_grad(true);
  head.b.set_requires_grad(true);
  return head;
}

// Terminal reward: the reward model scores (x, y) on the frozen scorer
// body; below lambda 1 the simulated user's SAM reading mixes in.
RewardFn make_reward_fn(TransformerLM scorer, RewardHead head, Vocabulary vocab,
                        EmotionLexicon lexicon, CircumplexTable table, const RunConfig& cfg) {
  const double lambda = cfg.lambda;
  const double noise = cfg.noise;
  const uint64_t seed = derive_seed(cfg.seed, "sim-user");
  const PoolMode pool = cfg.reward_pool;
  return [=](const std::vector<int>& x, const std::vector<int>& y) {
    const double extrinsic = score(scorer, head, x, y, pool).reward;
    if (lambda >= 1.0) return extrinsic;
    const UserFeedback fb = respond(vocab.decode(y), lexicon, table, 1.0, noise, seed);
    return combine_rewards(extrinsic, sam_to_unit(fb.sam_rating), lambda);
  };
}

bool valid_utf8(const std::string& s) {
  size_t i = 0;
  while (i < s.size()) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    int follow = 0;
    if (c < 0x80) follow = 0;
    else if ((c >> 5) == 0x6) follow = 1;
    else if ((c >> 4) == 0xe) follow = 2;
    else if ((c >> 3) == 0x1e) follow = 3;
    else return false;
    if (i + static_cast<size_t>(follow) >= s.size() + (follow == 0 ? 1 : 0)) {
      if (i + static_cast<size_t>(follow) >= s.size() && follow > 0) return false;
    }
    for (int k = 1; k <= follow; ++k) {
      if (i + static_cast<size_t>(k) >= s.size()) return false;
      if ((static_cast<unsigned char>(s[i + static_cast<size_t>(k)]) >> 6) != 0x2) return false;
    }
    i += static_cast<size_t>(follow) + 1;
  }
  return true;
}

// ---- subcommands ----------------------------------------------------------

int cmd_prepare(const CommonFlags& flags, const std::string& meld_path, bool synthetic,
                int dialogues_flag) {
  std::map<std::string, std::string> extra;
  if (dialogues_flag > 0) extra["synth.dialogues"] = std::to_string(dialogues_flag);
  RunConfig cfg = resolve_config(flags, extra);
  if (meld_path.empty() && !synthetic)
    throw UsageError("prepare needs either --meld <csv> or --synthetic");

  std::vector<Utterance> corpus;
  if (!meld_path.empty()) {
    require_file(meld_path, "MELD csv");
    try {
      corpus = load_meld_csv(meld_path);
    } catch (const std::runtime_error& e) {
      throw UsageError(e.what());  // malformed input data
    }
  } else {
    corpus = synth_corpus(cfg.seed, cfg.synth_dialogues);
  }
  if (corpus.empty()) throw UsageError("prepared corpus is empty");

  fs::create_directories(cfg.out_dir);
  write_resolved_config(cfg, "prepare");
  save_corpus_jsonl(corpus, out_path(cfg, "corpus.jsonl"));
  const Vocabulary vocab = Vocabulary::build(corpus_texts(corpus), cfg.lm_vocab_cap);
  vocab.save(out_path(cfg, "vocab.txt"));

  int64_t tokens = 0;
  for (const Utterance& u : corpus) tokens += static_cast<int64_t>(tokenize(u.text).size());
  const auto hist = label_histogram(corpus);
  json summary;
  summary["utterances"] = corpus.size();
  summary["tokens"] = tokens;
  summary["vocab_size"] = vocab.size();
  json labels;
  for (EmotionLabel label : kAllEmotions)
    labels[to_string(label)] = hist[static_cast<size_t>(label)];
  summary["labels"] = labels;
  std::ofstream out(out_path(cfg, "data_summary.json"));
  out << summary.dump(2) << "\n";

  std::cout << "prepared " << corpus.size() << " utterances, vocab " << vocab.size() << ", to "
            << cfg.out_dir << "\n";
  return 0;
}

int cmd_train_lm(const CommonFlags& flags) {
  RunConfig cfg = resolve_config(flags);
  require_file(corpus_file(cfg), "corpus (run prepare first)");
  require_file(vocab_file(cfg), "vocabulary (run prepare first)");
  const auto corpus = load_corpus_jsonl(corpus_file(cfg));
  const auto vocab = Vocabulary::load(vocab_file(cfg));
  const auto pairs = make_dialogue_pairs(corpus, vocab, cfg.lm.max_seq_len);

  LmConfig lm_cfg = cfg.lm;
  lm_cfg.vocab_size = vocab.size();
  TransformerLM model = TransformerLM::init(lm_cfg, derive_seed(cfg.seed, "lm-model"));
  LmTrainConfig train_cfg = cfg.lm_train;
  train_cfg.seed = derive_seed(cfg.seed, "train-lm");
  const auto curve = train_lm(model, pairs, train_cfg);

  write_resolved_config(cfg, "train_lm");
  save_checkpoint(checkpoint_from_lm(model), out_path(cfg, "lm.ckpt"));
  std::ofstream metrics(out_path(cfg, "lm_metrics.jsonl"));
  for (size_t i = 0; i < curve.size(); ++i)
    metrics << json{{"step", i}, {"loss", curve[i]}}.dump() << "\n";

  const double final_loss = lm_loss(model, pairs);
  std::cout << "trained lm on " << pairs.size() << " pairs: loss " << final_loss
            << " nats/token, perplexity " << std::exp(final_loss) << " (unigram "
            << unigram_perplexity(pairs) << ")\n";
  return 0;
}

int cmd_train_reward(const CommonFlags& flags) {
  RunConfig cfg = resolve_config(flags);
  require_file(out_path(cfg, "lm.ckpt"), "LM checkpoint (run train-lm first)");
  require_file(corpus_file(cfg), "corpus (run prepare first)");
  require_file(vocab_file(cfg), "vocabulary (run prepare first)");
  const auto corpus = load_corpus_jsonl(corpus_file(cfg));
  const auto vocab = Vocabulary::load(vocab_file(cfg));
  const auto pairs = make_dialogue_pairs(corpus, vocab, cfg.lm.max_seq_len);
  const auto table = resolve_table(cfg);

  Checkpoint lm_ckpt = load_checkpoint(out_path(cfg, "lm.ckpt"));
  const TransformerLM model = lm_from_checkpoint(lm_ckpt);
  RewardHead head = RewardHead::init(model.config().d_model, derive_seed(cfg.seed, "reward-head"));
  RewardTrainConfig train_cfg = cfg.reward;
  train_cfg.seed = derive_seed(cfg.seed, "train-reward");
  const auto metrics = train_reward_model(model, head, pairs, table, train_cfg, cfg.reward_pool);

  write_resolved_config(cfg, "train_reward");
  Checkpoint reward_ckpt = checkpoint_from_lm(model);
  reward_ckpt.blocks.emplace_back("reward_head.w", head.w.clone());
  reward_ckpt.blocks.emplace_back("reward_head.b", head.b.clone());
  save_checkpoint(reward_ckpt, out_path(cfg, "reward.ckpt"));

  std::ofstream mfile(out_path(cfg, "reward_metrics.jsonl"));
  for (size_t i = 0; i < metrics.losses.size(); ++i)
    mfile << json{{"step", i}, {"loss", metrics.losses[i]}}.dump() << "\n";
  mfile << json{{"holdout_accuracy", metrics.holdout_accuracy},
                {"av_mae", metrics.av_mae},
                {"train_samples", metrics.train_samples},
                {"holdout_samples", metrics.holdout_samples}}
               .dump()
        << "\n";

  std::cout << "trained reward head: holdout accuracy " << metrics.holdout_accuracy << ", (A,V) MAE "
            << metrics.av_mae << "\n";
  return 0;
}

int cmd_ppo(const CommonFlags& flags, int episodes_flag) {
  std::map<std::string, std::string> extra;
  if (episodes_flag >= 0) extra["ppo.episodes"] = std::to_string(episodes_flag);
  RunConfig cfg = resolve_config(flags, extra);
  require_file(out_path(cfg, "lm.ckpt"), "LM checkpoint (run train-lm first)");
  require_file(out_path(cfg, "reward.ckpt"), "reward checkpoint (run train-reward first)");
  require_file(vocab_file(cfg), "vocabulary (run prepare first)");

  const auto vocab = Vocabulary::load(vocab_file(cfg));
  const auto table = resolve_table(cfg);
  const auto lexicon = resolve_lexicon(cfg);

  TransformerLM policy = lm_from_checkpoint(load_checkpoint(out_path(cfg, "lm.ckpt")));
  const Checkpoint reward_ckpt = load_checkpoint(out_path(cfg, "reward.ckpt"));
  const TransformerLM scorer = lm_from_checkpoint(reward_ckpt).frozen_clone();
  const RewardHead head = head_from_checkpoint(reward_ckpt);

  // the reference snapshot is taken before episode 0 and never changes
  const TransformerLM reference = policy.frozen_clone();
  write_resolved_config(cfg, "ppo");
  save_checkpoint(checkpoint_from_lm(reference), out_path(cfg, "reference.ckpt"));

  PpoEnv env;
  env.prompts = build_prompt_pool(cfg, vocab);
  env.reward_fn = make_reward_fn(scorer, head, vocab, lexicon, table, cfg);
  env.decode = [vocab](const std::vector<int>& ids) { return vocab.decode(ids); };

  PpoConfig ppo_cfg = cfg.ppo;
  ppo_cfg.seed = derive_seed(cfg.seed, "ppo");

  std::ofstream metrics(out_path(cfg, "ppo_metrics.jsonl"));
  auto on_episode = [&](const EpisodeRecord& rec, const TransformerLM& current) {
    metrics << json{{"episode", rec.episode},
                    {"mean_reward", rec.mean_reward},
                    {"mean_kl", rec.mean_kl},
                    {"beta", rec.beta},
                    {"clip_fraction", rec.clip_fraction},
                    {"surrogate_loss", rec.surrogate_loss},
                    {"value_loss", rec.value_loss}}
                   .dump()
            << "\n";
    metrics.flush();
    std::cout << "episode " << rec.episode << ": reward " << rec.mean_reward << ", kl "
              << rec.mean_kl << ", beta " << rec.beta << "\n";
    if (ppo_cfg.checkpoint_every > 0 && (rec.episode + 1) % ppo_cfg.checkpoint_every == 0)
      save_checkpoint(checkpoint_from_lm(current),
                      out_path(cfg, "ppo_ep" + std::to_string(rec.episode + 1) + ".ckpt"));
  };

  const TrainResult result = train(policy, reference, env, ppo_cfg, on_episode);
  save_checkpoint(checkpoint_from_lm(policy), out_path(cfg, "ppo.ckpt"));
  if (result.aborted) {
    std::cerr << "training aborted: " << result.abort_reason
              << " (last good checkpoint retained)\n";
    return 1;
  }
  std::cout << "ppo finished: " << result.history.size() << " episodes, final policy in "
            << out_path(cfg, "ppo.ckpt") << "\n";
  return 0;
}

int cmd_eval(const CommonFlags& flags, std::string policy_path, int samples_flag) {
  std::map<std::string, std::string> extra;
  if (samples_flag == 0) throw UsageError("--samples must be >= 1");
  if (samples_flag > 0) extra["eval.samples"] = std::to_string(samples_flag);
  RunConfig cfg = resolve_config(flags, extra);
  if (policy_path.empty()) policy_path = out_path(cfg, "ppo.ckpt");
  require_file(policy_path, "policy checkpoint");
  require_file(out_path(cfg, "reference.ckpt"), "reference checkpoint (run ppo first)");
  require_file(out_path(cfg, "reward.ckpt"), "reward checkpoint (run train-reward first)");
  require_file(vocab_file(cfg), "vocabulary");

  const auto vocab = Vocabulary::load(vocab_file(cfg));
  const auto table = resolve_table(cfg);
  const auto lexicon = resolve_lexicon(cfg);
  const TransformerLM policy = lm_from_checkpoint(load_checkpoint(policy_path)).frozen_clone();
  const TransformerLM reference =
      lm_from_checkpoint(load_checkpoint(out_path(cfg, "reference.ckpt"))).frozen_clone();
  const Checkpoint reward_ckpt = load_checkpoint(out_path(cfg, "reward.ckpt"));
  const TransformerLM scorer = lm_from_checkpoint(reward_ckpt).frozen_clone();
  const RewardHead head = head_from_checkpoint(reward_ckpt);

  PpoEnv env;
  env.prompts = build_prompt_pool(cfg, vocab);
  env.reward_fn = make_reward_fn(scorer, head, vocab, lexicon, table, cfg);

  PpoConfig sample_cfg = cfg.ppo;
  const uint64_t eval_seed = derive_seed(cfg.seed, "eval");
  const RewardEstimate est = expected_reward(policy, env, cfg.eval_samples, eval_seed, sample_cfg);

  // measured KL vs reference and the oracle positive-valence fraction
  SplitMix64 pick(derive_seed(eval_seed, "kl-prompts"));
  double kl_sum = 0.0;
  int positive = 0, counted = 0;
  std::vector<json> transcripts;
  for (int i = 0; i < cfg.eval_samples; ++i) {
    const auto& prompt = env.prompts[pick.next_below(env.prompts.size())];
    SampleConfig sc{.max_new = sample_cfg.max_response_len,
                    .temperature = sample_cfg.temperature,
                    .top_k = sample_cfg.top_k,
                    .seed = derive_seed(eval_seed, "kl-sample", static_cast<uint64_t>(i))};
    const auto response = generate(policy, prompt, sc);
    if (response.empty()) continue;
    kl_sum += sequence_log_prob(policy, prompt, response) -
              sequence_log_prob(reference, prompt, response);
    const std::string text = vocab.decode(response);
    const EmotionLabel label = classify_emotion_lexicon(text, lexicon);
    if (table[label].valence > 0.0) ++positive;
    ++counted;
    if (transcripts.size() < 5)
      transcripts.push_back(json{{"prompt", vocab.decode(prompt)},
                                 {"response", text},
                                 {"oracle_label", to_string(label)},
                                 {"oracle_reward", label_reward(label, table)}});
  }
  const double measured_kl = counted > 0 ? kl_sum / counted : 0.0;
  const double positive_fraction =
      counted > 0 ? static_cast<double>(positive) / counted : 0.0;

  fs::create_directories(cfg.out_dir);
  write_resolved_config(cfg, "eval");
  std::ofstream report(out_path(cfg, "eval_report.jsonl"));
  for (const json& t : transcripts) report << t.dump() << "\n";
  report << json{{"expected_reward", est.mean},
                 {"std_error", est.std_error},
                 {"samples", est.samples},
                 {"measured_kl", measured_kl},
                 {"positive_valence_fraction", positive_fraction}}
                .dump()
         << "\n";

  std::ofstream summary(out_path(cfg, "eval_summary.txt"));
  auto emit = [&](std::ostream& os) {
    os << "policy: " << policy_path << "\n"
       << "expected reward: " << est.mean << " +- " << est.std_error << " (" << est.samples
       << " samples)\n"
       << "measured KL vs reference: " << measured_kl << " nats/sequence\n"
       << "positive-valence fraction: " << positive_fraction << "\n";
    for (const json& t : transcripts)
      os << "  [" << t["oracle_label"].get<std::string>() << "] " << t["prompt"].get<std::string>()
         << " -> " << t["response"].get<std::string>() << "\n";
  };
  emit(summary);
  emit(std::cout);
  return 0;
}

int cmd_chat(const CommonFlags& flags, std::string policy_path) {
  RunConfig cfg = resolve_config(flags);
  if (policy_path.empty()) policy_path = out_path(cfg, "ppo.ckpt");
  require_file(policy_path, "policy checkpoint");
  require_file(vocab_file(cfg), "vocabulary");
  const auto vocab = Vocabulary::load(vocab_file(cfg));
  const auto table = resolve_table(cfg);
  const auto lexicon = resolve_lexicon(cfg);
  const TransformerLM policy = lm_from_checkpoint(load_checkpoint(policy_path)).frozen_clone();

  fs::create_directories(cfg.out_dir);
  std::ofstream log(out_path(cfg, "chat_transcript.log"), std::ios::app);
  std::string line;
  uint64_t turn = 0;
  std::cout << "chat ready (empty line to re-prompt, ctrl-d to quit)\n> " << std::flush;
  while (std::getline(std::cin, line)) {
    if (line.empty()) {
      std::cout << "> " << std::flush;
      continue;
    }
    if (!valid_utf8(line)) {
      std::cerr << "warning: skipped non-UTF-8 input line\n";
      std::cout << "> " << std::flush;
      continue;
    }
    auto prompt = vocab.encode(line, /*add_bos=*/true, /*add_eos=*/false);
    const int budget = cfg.lm.max_seq_len - cfg.ppo.max_response_len;
    if (static_cast<int>(prompt.size()) > budget) {
      std::vector<int> trimmed = {Vocabulary::kBos};
      trimmed.insert(trimmed.end(), prompt.end() - (budget - 1), prompt.end());
      prompt = std::move(trimmed);
    }
    SampleConfig sc{.max_new = cfg.ppo.max_response_len,
                    .temperature = cfg.ppo.temperature,
                    .top_k = cfg.ppo.top_k,
                    .seed = derive_seed(cfg.seed, "chat-turn", turn)};
    const auto response = generate(policy, prompt, sc);
    const std::string text = vocab.decode(response);
    const UserFeedback fb = respond(text, lexicon, table, cfg.lambda, cfg.noise,
                                    derive_seed(cfg.seed, "chat-feedback", turn));
    std::cout << text << "\n[" << to_string(fb.label) << ", reward " << fb.reward << "]\n> "
              << std::flush;
    log << "user: " << line << "\n";
    log << "agent: " << text << " [" << to_string(fb.label) << ", reward " << fb.reward << "]\n";
    ++turn;
  }
  std::cout << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale emotion-reward dialogue RL lab"};
  app.require_subcommand(1);

  CommonFlags prepare_flags, train_lm_flags, train_reward_flags, ppo_flags, eval_flags, chat_flags;
  std::string meld_path, eval_policy, chat_policy;
  bool synthetic = false;
  int dialogues = 0, episodes = -1, samples = -1;

  CLI::App* prepare = app.add_subcommand("prepare", "build corpus + vocabulary");
  add_common(prepare, prepare_flags);
  prepare->add_option("--meld", meld_path, "MELD-format csv input");
  prepare->add_flag("--synthetic", synthetic, "generate the synthetic desk corpus");
  prepare->add_option("--dialogues", dialogues, "synthetic dialogue count");

  CLI::App* train_lm_cmd = app.add_subcommand("train-lm", "train the base language model");
  add_common(train_lm_cmd, train_lm_flags);

  CLI::App* train_reward = app.add_subcommand("train-reward", "train the reward head");
  add_common(train_reward, train_reward_flags);

  CLI::App* ppo = app.add_subcommand("ppo", "PPO fine-tuning against the reward model");
  add_common(ppo, ppo_flags);
  ppo->add_option("--episodes", episodes, "override episode count");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a policy checkpoint");
  add_common(eval, eval_flags);
  eval->add_option("--policy", eval_policy, "policy checkpoint (default: <out>/ppo.ckpt)");
  eval->add_option("--samples", samples, "evaluation sample count");

  CLI::App* chat = app.add_subcommand("chat", "interactive session with a policy");
  add_common(chat, chat_flags);
  chat->add_option("--policy", chat_policy, "policy checkpoint (default: <out>/ppo.ckpt)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (prepare->parsed()) return cmd_prepare(prepare_flags, meld_path, synthetic, dialogues);
    if (train_lm_cmd->parsed()) return cmd_train_lm(train_lm_flags);
    if (train_reward->parsed()) return cmd_train_reward(train_reward_flags);
    if (ppo->parsed()) return cmd_ppo(ppo_flags, episodes);
    if (eval->parsed()) return cmd_eval(eval_flags, eval_policy, samples);
    if (chat->parsed()) return cmd_chat(chat_flags, chat_policy);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
