#include "affectrl/lm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "affectrl/optim.hpp"
#include "affectrl/rng.hpp"

namespace affectrl {

void LmConfig::validate() const {
  if (vocab_size < 2) throw std::invalid_argument("lm config: vocab_size too small");
  if (d_model <= 0 || n_layers <= 0 || n_heads <= 0)
    throw std::invalid_argument("lm config: dimensions must be positive");
  if (d_model % n_heads != 0)
    throw std::invalid_argument("lm config: d_model must be divisible by n_heads");
  if (max_seq_len < 2) throw std::invalid_argument("lm config: max_seq_len must be >= 2");
}

namespace {

Tensor init_matrix(int rows, int cols, double stddev, SplitMix64& rng) {
  Tensor t({rows, cols}, 0.0, /*requires_grad=*/true);
  for (int i = 0; i < t.numel(); ++i) t.at(i) = rng.normal(0.0, stddev);
  return t;
}

Tensor zeros_vec(int n) { return Tensor({n}, 0.0, /*requires_grad=*/true); }
Tensor ones_vec(int n) { return Tensor({n}, 1.0, /*requires_grad=*/true); }

}  // namespace

TransformerLM TransformerLM::init(const LmConfig& config, uint64_t seed) {
  config.validate();
  TransformerLM m;
  m.config_ = config;
  SplitMix64 rng(derive_seed(seed, "lm-init"));
  const double stddev = 0.05;
  const int d = config.d_model;
  m.tok_emb = init_matrix(config.vocab_size, d, stddev, rng);
  m.pos_emb = init_matrix(config.max_seq_len, d, stddev, rng);
  for (int l = 0; l < config.n_layers; ++l) {
    Block b;
    b.ln1_gain = ones_vec(d);
    b.ln1_bias = zeros_vec(d);
    b.wq = init_matrix(d, d, stddev, rng);
    b.bq = zeros_vec(d);
    b.wk = init_matrix(d, d, stddev, rng);
    b.bk = zeros_vec(d);
    b.wv = init_matrix(d, d, stddev, rng);
    b.bv = zeros_vec(d);
    b.wo = init_matrix(d, d, stddev, rng);
    b.bo = zeros_vec(d);
    b.ln2_gain = ones_vec(d);
    b.ln2_bias = zeros_vec(d);
    b.fc1_w = init_matrix(d, 4 * d, stddev, rng);
    b.fc1_b = zeros_vec(4 * d);
    b.fc2_w = init_matrix(4 * d, d, stddev, rng);
    b.fc2_b = zeros_vec(d);
    m.blocks.push_back(std::move(b));
  }
  m.lnf_gain = ones_vec(d);
  m.lnf_bias = zeros_vec(d);
  m.head_w = init_matrix(d, config.vocab_size, stddev, rng);
  m.head_b = zeros_vec(config.vocab_size);
  return m;
}

Tensor TransformerLM::hidden_states(const std::vector<int>& tokens) const {
  const int len = static_cast<int>(tokens.size());
  if (len == 0) throw std::invalid_argument("lm forward: empty token sequence");
  if (len > config_.max_seq_len) throw std::invalid_argument("lm forward: sequence too long");
  for (int t : tokens)
    if (t < 0 || t >= config_.vocab_size)
      throw std::out_of_range("lm forward: token id outside vocabulary");

  std::vector<int> positions(static_cast<size_t>(len));
  std::iota(positions.begin(), positions.end(), 0);
  Tensor x = add(embedding_rows(tok_emb, tokens), embedding_rows(pos_emb, positions));

  const int n_heads = config_.n_heads;
  const int head_dim = config_.d_model / n_heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  for (const Block& b : blocks) {
    Tensor h = layer_norm_rows(x, b.ln1_gain, b.ln1_bias);
    Tensor q = add_bias(matmul(h, b.wq), b.bq);
    Tensor k = add_bias(matmul(h, b.wk), b.bk);
    Tensor v = add_bias(matmul(h, b.wv), b.bv);
    std::vector<Tensor> heads;
    heads.reserve(static_cast<size_t>(n_heads));
    for (int hh = 0; hh < n_heads; ++hh) {
      const int off = hh * head_dim;
      Tensor qh = slice_cols(q, off, head_dim);
      Tensor kh = slice_cols(k, off, head_dim);
      Tensor vh = slice_cols(v, off, head_dim);
      Tensor scores = scale(matmul(qh, transpose(kh)), att_scale);
      Tensor attn = causal_softmax_rows(scores);
      heads.push_back(matmul(attn, vh));
    }
    Tensor att_out = add_bias(matmul(concat_cols(heads), b.wo), b.bo);
    x = add(x, att_out);
    Tensor h2 = layer_norm_rows(x, b.ln2_gain, b.ln2_bias);
    Tensor m1 = gelu(add_bias(matmul(h2, b.fc1_w), b.fc1_b));
    x = add(x, add_bias(matmul(m1, b.fc2_w), b.fc2_b));
  }
  return layer_norm_rows(x, lnf_gain, lnf_bias);
}

Tensor TransformerLM::forward_logits(const std::vector<int>& tokens) const {
  return add_bias(matmul(hidden_states(tokens), head_w), head_b);
}

std::vector<std::pair<std::string, Tensor>> TransformerLM::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("tok_emb", tok_emb);
  out.emplace_back("pos_emb", pos_emb);
  for (size_t l = 0; l < blocks.size(); ++l) {
    const Block& b = blocks[l];
    const std::string p = "block" + std::to_string(l) + ".";
    out.emplace_back(p + "ln1.gain", b.ln1_gain);
    out.emplace_back(p + "ln1.bias", b.ln1_bias);
    out.emplace_back(p + "attn.wq", b.wq);
    out.emplace_back(p + "attn.bq", b.bq);
    out.emplace_back(p + "attn.wk", b.wk);
    out.emplace_back(p + "attn.bk", b.bk);
    out.emplace_back(p + "attn.wv", b.wv);
    out.emplace_back(p + "attn.bv", b.bv);
    out.emplace_back(p + "attn.wo", b.wo);
    out.emplace_back(p + "attn.bo", b.bo);
    out.emplace_back(p + "ln2.gain", b.ln2_gain);
    out.emplace_back(p + "ln2.bias", b.ln2_bias);
    out.emplace_back(p + "mlp.fc1_w", b.fc1_w);
    out.emplace_back(p + "mlp.fc1_b", b.fc1_b);
    out.emplace_back(p + "mlp.fc2_w", b.fc2_w);
    out.emplace_back(p + "mlp.fc2_b", b.fc2_b);
  }
  out.emplace_back("lnf.gain", lnf_gain);
  out.emplace_back("lnf.bias", lnf_bias);
  out.emplace_back("head.w", head_w);
  out.emplace_back("head.b", head_b);
  return out;
}

std::vector<Tensor> TransformerLM::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

int64_t TransformerLM::parameter_count() const {
  int64_t n = 0;
  for (const Tensor& t : parameters()) n += t.numel();
  return n;
}

TransformerLM TransformerLM::clone() const {
  TransformerLM m;
  m.config_ = config_;
  m.tok_emb = tok_emb.clone();
  m.pos_emb = pos_emb.clone();
  for (const Block& b : blocks) {
    Block c;
    c.ln1_gain = b.ln1_gain.clone();
    c.ln1_bias = b.ln1_bias.clone();
    c.wq = b.wq.clone();
    c.bq = b.bq.clone();
    c.wk = b.wk.clone();
    c.bk = b.bk.clone();
    c.wv = b.wv.clone();
    c.bv = b.bv.clone();
    c.wo = b.wo.clone();
    c.bo = b.bo.clone();
    c.ln2_gain = b.ln2_gain.clone();
    c.ln2_bias = b.ln2_bias.clone();
    c.fc1_w = b.fc1_w.clone();
    c.fc1_b = b.fc1_b.clone();
    c.fc2_w = b.fc2_w.clone();
    c.fc2_b = b.fc2_b.clone();
    m.blocks.push_back(std::move(c));
  }
  m.lnf_gain = lnf_gain.clone();
  m.lnf_bias = lnf_bias.clone();
  m.head_w = head_w.clone();
  m.head_b = head_b.clone();
  return m;
}

TransformerLM TransformerLM::frozen_clone() const {
  TransformerLM m = clone();
  for (Tensor& t : m.parameters()) t.set_requires_grad(false);
  return m;
}

bool TransformerLM::same_parameters(const TransformerLM& a, const TransformerLM& b) {
  auto pa = a.parameters();
  auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].shape() != pb[i].shape()) return false;
    if (pa[i].values() != pb[i].values()) return false;
  }
  return true;
}

Tensor response_log_probs(const TransformerLM& model, const std::vector<int>& prompt,
                          const std::vector<int>& response) {
  if (prompt.empty()) throw std::invalid_argument("sequence_log_prob: empty prompt");
  if (response.empty()) throw std::invalid_argument("sequence_log_prob: empty response");
  const int px = static_cast<int>(prompt.size());
  const int py = static_cast<int>(response.size());
  if (px + py > model.config().max_seq_len)
    throw std::invalid_argument("sequence_log_prob: combined length exceeds max_seq_len");
  std::vector<int> full = prompt;
  full.insert(full.end(), response.begin(), response.end());
  // logits at position i predict token i+1; drop the final position
  full.pop_back();
  Tensor logits = model.forward_logits(full);
  Tensor shifted = slice_rows(logits, px - 1, py);
  return take_per_row(log_softmax_rows(shifted), response);
}

double sequence_log_prob(const TransformerLM& model, const std::vector<int>& prompt,
                         const std::vector<int>& response) {
  NoGradGuard no_grad;
  Tensor lp = response_log_probs(model, prompt, response);
  return std::accumulate(lp.values().begin(), lp.values().end(), 0.0);
}

std::vector<int> generate(const TransformerLM& model, const std::vector<int>& prompt,
                          const SampleConfig& sample) {
  if (prompt.empty()) throw std::invalid_argument("generate: empty prompt");
  if (sample.temperature < 0.0) throw std::invalid_argument("generate: negative temperature");
  const int vocab = model.config().vocab_size;
  int top_k = sample.top_k == 0 ? vocab : sample.top_k;
  if (top_k < 1 || top_k > vocab) throw std::invalid_argument("generate: top_k out of range");

  NoGradGuard no_grad;
  SplitMix64 rng(derive_seed(sample.seed, "generate"));
  std::vector<int> tokens = prompt;
  std::vector<int> out;
  for (int step = 0; step < sample.max_new; ++step) {
    if (static_cast<int>(tokens.size()) >= model.config().max_seq_len) break;
    Tensor logits = model.forward_logits(tokens);
    const double* row = logits.data() + static_cast<size_t>(logits.rows() - 1) * vocab;

    // top-k preselection; ties resolve to the lower id
    std::vector<int> order(static_cast<size_t>(vocab));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [row](int a, int b) { return row[a] > row[b]; });
    order.resize(static_cast<size_t>(top_k));

    int next;
    if (sample.temperature == 0.0 || top_k == 1) {
      next = order[0];
    } else {
      std::vector<double> kept(order.size());
      for (size_t i = 0; i < order.size(); ++i)
        kept[i] = row[order[i]] / sample.temperature;
      const std::vector<double> probs = softmax(kept);
      double u = rng.next_double();
      size_t pick = probs.size() - 1;
      double acc = 0.0;
      for (size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
      next = order[pick];
    }
    tokens.push_back(next);
    out.push_back(next);
    if (next == Vocabulary::kEos) break;
  }
  return out;
}

std::vector<double> train_lm(TransformerLM& model, const std::vector<DialoguePair>& pairs,
                             const LmTrainConfig& config) {
  if (pairs.empty()) throw std::invalid_argument("train_lm: empty pair set");
  Adam opt(model.parameters(), {.lr = config.lr});
  std::vector<double> curve;
  std::vector<size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    SplitMix64 shuffle_rng(derive_seed(config.seed, "lm-epoch", static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);

    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      GradTape tape;
      Tensor batch_loss_sum = Tensor::scalar(0.0);
      int64_t token_count = 0;
      for (size_t idx = start; idx < stop; ++idx) {
        const DialoguePair& pair = pairs[order[idx]];
        Tensor lp = response_log_probs(model, pair.prompt, pair.response);
        batch_loss_sum = sub(batch_loss_sum, sum(lp));
        token_count += lp.numel();
      }
      Tensor loss = scale(batch_loss_sum, 1.0 / static_cast<double>(token_count));
      curve.push_back(loss.item());
      tape.backward(loss);
      opt.step();
    }
  }
  return curve;
}

double lm_loss(const TransformerLM& model, const std::vector<DialoguePair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("lm_loss: empty pair set");
  NoGradGuard no_grad;
  double total = 0.0;
  int64_t tokens = 0;
  for (const DialoguePair& pair : pairs) {
    total += sequence_log_prob(model, pair.prompt, pair.response);
    tokens += static_cast<int64_t>(pair.response.size());
  }
  return -total / static_cast<double>(tokens);
}

double unigram_perplexity(const std::vector<DialoguePair>& pairs) {
  std::unordered_map<int, int64_t> counts;
  int64_t total = 0;
  for (const DialoguePair& pair : pairs)
    for (int t : pair.response) {
      ++counts[t];
      ++total;
    }
  if (total == 0) throw std::invalid_argument("unigram_perplexity: no response tokens");
  double log_prob = 0.0;
  for (const auto& [token, count] : counts)
    log_prob += static_cast<double>(count) *
                std::log(static_cast<double>(count) / static_cast<double>(total));
  return std::exp(-log_prob / static_cast<double>(total));
}

}  // namespace affectrl
