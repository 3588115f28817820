#include "affectrl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace affectrl {

namespace {

thread_local GradTape* g_active_tape = nullptr;

int64_t product(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

bool is_tracked(const Tensor& t) {
  return t.node()->requires_grad || t.node()->tracked;
}

// True when the active tape should record an op over these inputs. Prepares
// grad buffers on every participant so backward steps can accumulate blindly.
template <typename... Ts>
bool recording(const Tensor& out, const Ts&... ins) {
  if (g_active_tape == nullptr) return false;
  bool any = (is_tracked(ins) || ...);
  if (!any) return false;
  out.node()->tracked = true;
  out.node()->ensure_grad();
  (ins.node()->ensure_grad(), ...);
  return true;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

void check_matrix(const Tensor& a, const char* op) {
  if (a.ndim() != 2) throw std::invalid_argument(std::string(op) + ": expected a matrix");
}

}  // namespace

Tensor::Tensor(std::vector<int> shape, double fill, bool requires_grad)
    : node_(std::make_shared<TensorNode>()) {
  const int64_t n = product(shape);
  node_->shape = std::move(shape);
  node_->data.assign(static_cast<size_t>(n), fill);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  Tensor t(std::vector<int>{1}, value, requires_grad);
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
  const int64_t n = product(shape);
  if (static_cast<size_t>(n) != data.size())
    throw std::invalid_argument("from_data: shape does not match data length");
  Tensor t;
  t.node_->shape = std::move(shape);
  t.node_->data = std::move(data);
  t.node_->requires_grad = requires_grad;
  return t;
}

int Tensor::rows() const {
  if (ndim() != 2) throw std::logic_error("rows(): not a matrix");
  return node_->shape[0];
}

int Tensor::cols() const {
  if (ndim() != 2) throw std::logic_error("cols(): not a matrix");
  return node_->shape[1];
}

double Tensor::item() const {
  if (numel() != 1) throw std::logic_error("item(): tensor is not scalar");
  return node_->data[0];
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("grad(): no gradient present");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor t;
  t.node_->shape = node_->shape;
  t.node_->data = node_->data;
  t.node_->requires_grad = node_->requires_grad;
  return t;
}

Tensor Tensor::detach() const {
  Tensor t;
  t.node_->shape = node_->shape;
  t.node_->data = node_->data;  // copy; detached view must not alias grads
  return t;
}

// ---- tape -----------------------------------------------------------------

GradTape::GradTape() {
  prev_ = g_active_tape;
  g_active_tape = this;
}

GradTape::~GradTape() { g_active_tape = prev_; }

GradTape* GradTape::active() { return g_active_tape; }

void GradTape::backward(const Tensor& loss) {
  if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
  if (steps_.empty())
    throw std::logic_error("backward: tape is empty (already replayed or nothing recorded)");
  loss.node()->ensure_grad();
  loss.node()->grad[0] = 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  steps_.clear();
}

NoGradGuard::NoGradGuard() : saved_(g_active_tape) { g_active_tape = nullptr; }
NoGradGuard::~NoGradGuard() { g_active_tape = saved_; }

// ---- elementwise ops --------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out(a.shape());
  const int n = a.numel();
  for (int i = 0; i < n; ++i) out.at(i) = a.at(i) + b.at(i);
  if (recording(out, a, b)) {
    g_active_tape->record([an = a.node(), bn = b.node(), on = out.node()] {
      const size_t n = on->data.size();
      if (an->requires_grad || an->tracked)
        for (size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i];
      if (bn->requires_grad || bn->tracked)
        for (size_t i = 0; i < n; ++i) bn->grad[i] += on->grad[i];
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a.shape());
  const int n = a.numel();
  for (int i = 0; i < n; ++i) out.at(i) = a.at(i) - b.at(i);
  if (recording(out, a, b)) {
    g_active_tape->record([an = a.node(), bn = b.node(), on = out.node()] {
      const size_t n = on->data.size();
      if (an->requires_grad || an->tracked)
        for (size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i];
      if (bn->requires_grad || bn->tracked)
        for (size_t i = 0; i < n; ++i) bn->grad[i] -= on->grad[i];
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a.shape());
  const int n = a.numel();
  for (int i = 0; i < n; ++i) out.at(i) = a.at(i) * b.at(i);
  if (recording(out, a, b)) {
    g_active_tape->record([an = a.node(), bn = b.node(), on = out.node()] {
      const size_t n = on->data.size();
      if (an->requires_grad || an->tracked)
        for (size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i] * bn->data[i];
      if (bn->requires_grad || bn->tracked)
        for (size_t i = 0; i < n; ++i) bn->grad[i] += on->grad[i] * an->data[i];
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out(a.shape());
  const int n = a.numel();
  for (int i = 0; i < n; ++i) out.at(i) = a.at(i) * c;
  if (recording(out, a)) {
    g_active_tape->record([an = a.node(), on = out.node(), c] {
      const size_t n = on->data.size();
      for (size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i] * c;
    });
  }
  return out;
}

Tensor add_bias(const Tensor& mat, const Tensor& bias) {
  check_matrix(mat, "add_bias");
  if (bias.ndim() != 1 || bias.dim(0) != mat.cols())
    throw std::invalid_argument("add_bias: bias length must match matrix columns");
  const int r = mat.rows(), c = mat.cols();
  Tensor out(mat.shape());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(i, j) = mat.at(i, j) + bias.at(j);
  if (recording(out, mat, bias)) {
    g_active_tape->record([mn = mat.node(), bn = bias.node(), on = out.node(), r, c] {
      if (mn->requires_grad || mn->tracked) {
        const size_t n = on->data.size();
        for (size_t i = 0; i < n; ++i) mn->grad[i] += on->grad[i];
      }
      if (bn->requires_grad || bn->tracked) {
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) bn->grad[static_cast<size_t>(j)] += on->grad[static_cast<size_t>(i) * c + j];
      }
    });
  }
  return out;
}

// ---- matrix ops -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_matrix(a, "matmul");
  check_matrix(b, "matmul");
  const int n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) throw std::invalid_argument("matmul: inner dimensions disagree");
  Tensor out({n, m});
  const double* ap = a.data();
  const double* bp = b.data();
  double* op = out.data();
  for (int i = 0; i < n; ++i) {
    double* orow = op + static_cast<size_t>(i) * m;
    const double* arow = ap + static_cast<size_t>(i) * k;
    for (int t = 0; t < k; ++t) {
      const double av = arow[t];
      if (av == 0.0) continue;
      const double* brow = bp + static_cast<size_t>(t) * m;
      for (int j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  if (recording(out, a, b)) {
    g_active_tape->record([an = a.node(), bn = b.node(), on = out.node(), n, k, m] {
      const double* gp = on->grad.data();
      if (an->requires_grad || an->tracked) {
        // dA[i,t] = sum_j dC[i,j] * B[t,j]
        double* agp = an->grad.data();
        const double* bp = bn->data.data();
        for (int i = 0; i < n; ++i) {
          const double* grow = gp + static_cast<size_t>(i) * m;
          double* arow = agp + static_cast<size_t>(i) * k;
          for (int t = 0; t < k; ++t) {
            const double* brow = bp + static_cast<size_t>(t) * m;
            double acc = 0.0;
            for (int j = 0; j < m; ++j) acc += grow[j] * brow[j];
            arow[t] += acc;
          }
        }
      }
      if (bn->requires_grad || bn->tracked) {
        // dB[t,j] = sum_i A[i,t] * dC[i,j]
        double* bgp = bn->grad.data();
        const double* ap = an->data.data();
        for (int i = 0; i < n; ++i) {
          const double* grow = gp + static_cast<size_t>(i) * m;
          const double* arow = ap + static_cast<size_t>(i) * k;
          for (int t = 0; t < k; ++t) {
            const double av = arow[t];
            if (av == 0.0) continue;
            double* brow = bgp + static_cast<size_t>(t) * m;
            for (int j = 0; j < m; ++j) brow[j] += av * grow[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  check_matrix(a, "transpose");
  const int r = a.rows(), c = a.cols();
  Tensor out({c, r});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(j, i) = a.at(i, j);
  if (recording(out, a)) {
    g_active_tape->record([an = a.node(), on = out.node(), r, c] {
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          an->grad[static_cast<size_t>(i) * c + j] += on->grad[static_cast<size_t>(j) * r + i];
    });
  }
  return out;
}

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
  check_matrix(table, "embedding_rows");
  const int v = table.rows(), d = table.cols();
  const int n = static_cast<int>(ids.size());
  if (n == 0) throw std::invalid_argument("embedding_rows: empty id list");
  for (int id : ids)
    if (id < 0 || id >= v) throw std::out_of_range("embedding_rows: id out of table range");
  Tensor out({n, d});
  for (int i = 0; i < n; ++i) {
    const double* src = table.data() + static_cast<size_t>(ids[static_cast<size_t>(i)]) * d;
    std::copy(src, src + d, out.data() + static_cast<size_t>(i) * d);
  }
  if (recording(out, table)) {
    g_active_tape->record([tn = table.node(), on = out.node(), ids, d] {
      for (size_t i = 0; i < ids.size(); ++i) {
        double* dst = tn->grad.data() + static_cast<size_t>(ids[i]) * d;
        const double* src = on->grad.data() + i * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  check_matrix(x, "layer_norm_rows");
  const int r = x.rows(), c = x.cols();
  if (gain.ndim() != 1 || gain.dim(0) != c || bias.ndim() != 1 || bias.dim(0) != c)
    throw std::invalid_argument("layer_norm_rows: gain/bias length must match columns");
  Tensor out({r, c});
  std::vector<double> inv_sigma(static_cast<size_t>(r));
  std::vector<double> xhat(static_cast<size_t>(r) * c);
  for (int i = 0; i < r; ++i) {
    const double* row = x.data() + static_cast<size_t>(i) * c;
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += row[j];
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      const double dv = row[j] - mu;
      var += dv * dv;
    }
    var /= c;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[static_cast<size_t>(i)] = is;
    for (int j = 0; j < c; ++j) {
      const double h = (row[j] - mu) * is;
      xhat[static_cast<size_t>(i) * c + j] = h;
      out.at(i, j) = gain.at(j) * h + bias.at(j);
    }
  }
  if (recording(out, x, gain, bias)) {
    g_active_tape->record([xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node(),
                           inv_sigma = std::move(inv_sigma), xhat = std::move(xhat), r, c] {
      for (int i = 0; i < r; ++i) {
        const double* grow = on->grad.data() + static_cast<size_t>(i) * c;
        const double* hrow = xhat.data() + static_cast<size_t>(i) * c;
        if (gn->requires_grad || gn->tracked)
          for (int j = 0; j < c; ++j) gn->grad[static_cast<size_t>(j)] += grow[j] * hrow[j];
        if (bn->requires_grad || bn->tracked)
          for (int j = 0; j < c; ++j) bn->grad[static_cast<size_t>(j)] += grow[j];
        if (xn->requires_grad || xn->tracked) {
          // dx = (g*dy - mean(g*dy) - xhat * mean(g*dy*xhat)) * inv_sigma
          double m1 = 0.0, m2 = 0.0;
          for (int j = 0; j < c; ++j) {
            const double gd = gn->data[static_cast<size_t>(j)] * grow[j];
            m1 += gd;
            m2 += gd * hrow[j];
          }
          m1 /= c;
          m2 /= c;
          const double is = inv_sigma[static_cast<size_t>(i)];
          double* xrow = xn->grad.data() + static_cast<size_t>(i) * c;
          for (int j = 0; j < c; ++j) {
            const double gd = gn->data[static_cast<size_t>(j)] * grow[j];
            xrow[j] += (gd - m1 - hrow[j] * m2) * is;
          }
        }
      }
    });
  }
  return out;
}

// ---- nonlinearities ---------------------------------------------------------

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

Tensor gelu(const Tensor& x) {
  Tensor out(x.shape());
  const int n = x.numel();
  for (int i = 0; i < n; ++i) {
    const double v = x.at(i);
    out.at(i) = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  if (recording(out, x)) {
    g_active_tape->record([xn = x.node(), on = out.node()] {
      const size_t n = on->data.size();
      for (size_t i = 0; i < n; ++i) {
        const double v = xn->data[i];
        const double phi = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        xn->grad[i] += on->grad[i] * (phi + v * pdf);
      }
    });
  }
  return out;
}

Tensor tanh(const Tensor& x) {
  Tensor out(x.shape());
  const int n = x.numel();
  for (int i = 0; i < n; ++i) out.at(i) = std::tanh(x.at(i));
  if (recording(out, x)) {
    g_active_tape->record([xn = x.node(), on = out.node()] {
      const size_t n = on->data.size();
      for (size_t i = 0; i < n; ++i) {
        const double t = on->data[i];
        xn->grad[i] += on->grad[i] * (1.0 - t * t);
      }
    });
  }
  return out;
}

Tensor exp(const Tensor& x) {
  Tensor out(x.shape());
  const int n = x.numel();
  for (int i = 0; i < n; ++i) out.at(i) = std::exp(x.at(i));
  if (recording(out, x)) {
    g_active_tape->record([xn = x.node(), on = out.node()] {
      const size_t n = on->data.size();
      for (size_t i = 0; i < n; ++i) xn->grad[i] += on->grad[i] * on->data[i];
    });
  }
  return out;
}

Tensor clip(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clip: lo must be <= hi");
  Tensor out(x.shape());
  const int n = x.numel();
  for (int i = 0; i < n; ++i) out.at(i) = std::clamp(x.at(i), lo, hi);
  if (recording(out, x)) {
    g_active_tape->record([xn = x.node(), on = out.node(), lo, hi] {
      const size_t n = on->data.size();
      for (size_t i = 0; i < n; ++i) {
        const double v = xn->data[i];
        if (v > lo && v < hi) xn->grad[i] += on->grad[i];
      }
    });
  }
  return out;
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "minimum");
  Tensor out(a.shape());
  const int n = a.numel();
  for (int i = 0; i < n; ++i) out.at(i) = std::min(a.at(i), b.at(i));
  if (recording(out, a, b)) {
    g_active_tape->record([an = a.node(), bn = b.node(), on = out.node()] {
      const size_t n = on->data.size();
      for (size_t i = 0; i < n; ++i) {
        // ties route to the first argument
        if (an->data[i] <= bn->data[i]) {
          if (an->requires_grad || an->tracked) an->grad[i] += on->grad[i];
        } else if (bn->requires_grad || bn->tracked) {
          bn->grad[i] += on->grad[i];
        }
      }
    });
  }
  return out;
}

// ---- softmax family ----------------------------------------------------------

std::vector<double> softmax(const std::vector<double>& logits) {
  if (logits.empty()) throw std::invalid_argument("empty logits");
  for (double v : logits)
    if (!std::isfinite(v)) throw std::invalid_argument("softmax: non-finite logit");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double denom = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    denom += out[i];
  }
  for (double& v : out) v /= denom;
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  check_matrix(x, "softmax_rows");
  const int r = x.rows(), c = x.cols();
  Tensor out({r, c});
  for (int i = 0; i < r; ++i) {
    const double* row = x.data() + static_cast<size_t>(i) * c;
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < c; ++j) {
      const double e = std::exp(row[j] - mx);
      out.at(i, j) = e;
      denom += e;
    }
    for (int j = 0; j < c; ++j) out.at(i, j) /= denom;
  }
  if (recording(out, x)) {
    g_active_tape->record([xn = x.node(), on = out.node(), r, c] {
      for (int i = 0; i < r; ++i) {
        const double* p = on->data.data() + static_cast<size_t>(i) * c;
        const double* g = on->grad.data() + static_cast<size_t>(i) * c;
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += p[j] * g[j];
        double* xg = xn->grad.data() + static_cast<size_t>(i) * c;
        for (int j = 0; j < c; ++j) xg[j] += p[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

Tensor causal_softmax_rows(const Tensor& scores) {
  check_matrix(scores, "causal_softmax_rows");
  if (scores.rows() != scores.cols())
    throw std::invalid_argument("causal_softmax_rows: matrix must be square");
  const int n = scores.rows();
  Tensor out({n, n});
  for (int i = 0; i < n; ++i) {
    const double* row = scores.data() + static_cast<size_t>(i) * n;
    double mx = row[0];
    for (int j = 1; j <= i; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j <= i; ++j) {
      const double e = std::exp(row[j] - mx);
      out.at(i, j) = e;
      denom += e;
    }
    for (int j = 0; j <= i; ++j) out.at(i, j) /= denom;
  }
  if (recording(out, scores)) {
    g_active_tape->record([sn = scores.node(), on = out.node(), n] {
      for (int i = 0; i < n; ++i) {
        const double* p = on->data.data() + static_cast<size_t>(i) * n;
        const double* g = on->grad.data() + static_cast<size_t>(i) * n;
        double dot = 0.0;
        for (int j = 0; j <= i; ++j) dot += p[j] * g[j];
        double* sg = sn->grad.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j <= i; ++j) sg[j] += p[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

Tensor log_softmax_rows(const Tensor& x) {
  check_matrix(x, "log_softmax_rows");
  const int r = x.rows(), c = x.cols();
  Tensor out({r, c});
  for (int i = 0; i < r; ++i) {
    const double* row = x.data() + static_cast<size_t>(i) * c;
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
    const double lse = mx + std::log(denom);
    for (int j = 0; j < c; ++j) out.at(i, j) = row[j] - lse;
  }
  if (recording(out, x)) {
    g_active_tape->record([xn = x.node(), on = out.node(), r, c] {
      for (int i = 0; i < r; ++i) {
        const double* lp = on->data.data() + static_cast<size_t>(i) * c;
        const double* g = on->grad.data() + static_cast<size_t>(i) * c;
        double gsum = 0.0;
        for (int j = 0; j < c; ++j) gsum += g[j];
        double* xg = xn->grad.data() + static_cast<size_t>(i) * c;
        for (int j = 0; j < c; ++j) xg[j] += g[j] - std::exp(lp[j]) * gsum;
      }
    });
  }
  return out;
}

// ---- indexing / reshaping ----------------------------------------------------

Tensor take_per_row(const Tensor& mat, const std::vector<int>& ids) {
  check_matrix(mat, "take_per_row");
  const int r = mat.rows(), c = mat.cols();
  if (static_cast<int>(ids.size()) != r)
    throw std::invalid_argument("take_per_row: need one index per row");
  for (int id : ids)
    if (id < 0 || id >= c) throw std::out_of_range("take_per_row: column index out of range");
  Tensor out({r});
  for (int i = 0; i < r; ++i) out.at(i) = mat.at(i, ids[static_cast<size_t>(i)]);
  if (recording(out, mat)) {
    g_active_tape->record([mn = mat.node(), on = out.node(), ids, c] {
      for (size_t i = 0; i < ids.size(); ++i)
        mn->grad[i * c + static_cast<size_t>(ids[i])] += on->grad[i];
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& mat, int start, int len) {
  check_matrix(mat, "slice_rows");
  const int r = mat.rows(), c = mat.cols();
  if (start < 0 || len <= 0 || start + len > r)
    throw std::out_of_range("slice_rows: range out of bounds");
  Tensor out({len, c});
  std::copy(mat.data() + static_cast<size_t>(start) * c,
            mat.data() + static_cast<size_t>(start + len) * c, out.data());
  if (recording(out, mat)) {
    g_active_tape->record([mn = mat.node(), on = out.node(), start, len, c] {
      for (size_t i = 0; i < static_cast<size_t>(len) * c; ++i)
        mn->grad[static_cast<size_t>(start) * c + i] += on->grad[i];
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& mat, int start, int len) {
  check_matrix(mat, "slice_cols");
  const int r = mat.rows(), c = mat.cols();
  if (start < 0 || len <= 0 || start + len > c)
    throw std::out_of_range("slice_cols: range out of bounds");
  Tensor out({r, len});
  for (int i = 0; i < r; ++i)
    std::copy(mat.data() + static_cast<size_t>(i) * c + start,
              mat.data() + static_cast<size_t>(i) * c + start + len,
              out.data() + static_cast<size_t>(i) * len);
  if (recording(out, mat)) {
    g_active_tape->record([mn = mat.node(), on = out.node(), start, len, c, r] {
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < len; ++j)
          mn->grad[static_cast<size_t>(i) * c + start + j] +=
              on->grad[static_cast<size_t>(i) * len + j];
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty part list");
  const int r = parts[0].rows();
  int total = 0;
  for (const Tensor& p : parts) {
    check_matrix(p, "concat_cols");
    if (p.rows() != r) throw std::invalid_argument("concat_cols: row counts disagree");
    total += p.cols();
  }
  Tensor out({r, total});
  int off = 0;
  for (const Tensor& p : parts) {
    const int pc = p.cols();
    for (int i = 0; i < r; ++i)
      std::copy(p.data() + static_cast<size_t>(i) * pc, p.data() + static_cast<size_t>(i + 1) * pc,
                out.data() + static_cast<size_t>(i) * total + off);
    off += pc;
  }
  bool any = false;
  for (const Tensor& p : parts) any = any || (p.node()->requires_grad || p.node()->tracked);
  if (g_active_tape != nullptr && any) {
    out.node()->tracked = true;
    out.node()->ensure_grad();
    std::vector<std::shared_ptr<TensorNode>> nodes;
    std::vector<int> widths;
    for (const Tensor& p : parts) {
      p.node()->ensure_grad();
      nodes.push_back(p.node());
      widths.push_back(p.cols());
    }
    g_active_tape->record([nodes = std::move(nodes), widths = std::move(widths),
                           on = out.node(), r, total] {
      int off = 0;
      for (size_t k = 0; k < nodes.size(); ++k) {
        const int pc = widths[k];
        if (nodes[k]->requires_grad || nodes[k]->tracked)
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < pc; ++j)
              nodes[k]->grad[static_cast<size_t>(i) * pc + j] +=
                  on->grad[static_cast<size_t>(i) * total + off + j];
        off += pc;
      }
    });
  }
  return out;
}

// ---- reductions ---------------------------------------------------------------

Tensor sum(const Tensor& x) {
  Tensor out = Tensor::scalar(std::accumulate(x.values().begin(), x.values().end(), 0.0));
  if (recording(out, x)) {
    g_active_tape->record([xn = x.node(), on = out.node()] {
      const double g = on->grad[0];
      for (double& v : xn->grad) v += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  const int n = x.numel();
  Tensor out = Tensor::scalar(std::accumulate(x.values().begin(), x.values().end(), 0.0) / n);
  if (recording(out, x)) {
    g_active_tape->record([xn = x.node(), on = out.node(), n] {
      const double g = on->grad[0] / n;
      for (double& v : xn->grad) v += g;
    });
  }
  return out;
}

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets) {
  check_matrix(logits, "cross_entropy_rows");
  const int r = logits.rows(), c = logits.cols();
  if (static_cast<int>(targets.size()) != r)
    throw std::invalid_argument("cross_entropy_rows: need one target per row");
  for (int t : targets)
    if (t < 0 || t >= c) throw std::out_of_range("cross_entropy_rows: target out of range");
  double total = 0.0;
  std::vector<double> lse(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    const double* row = logits.data() + static_cast<size_t>(i) * c;
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
    lse[static_cast<size_t>(i)] = mx + std::log(denom);
    total += lse[static_cast<size_t>(i)] - row[targets[static_cast<size_t>(i)]];
  }
  Tensor out = Tensor::scalar(total / r);
  if (recording(out, logits)) {
    g_active_tape->record([ln = logits.node(), on = out.node(), lse = std::move(lse), targets, r, c] {
      const double g = on->grad[0] / r;
      for (int i = 0; i < r; ++i) {
        const double* row = ln->data.data() + static_cast<size_t>(i) * c;
        double* grow = ln->grad.data() + static_cast<size_t>(i) * c;
        const double l = lse[static_cast<size_t>(i)];
        for (int j = 0; j < c; ++j) grow[j] += g * std::exp(row[j] - l);
        grow[targets[static_cast<size_t>(i)]] -= g;
      }
    });
  }
  return out;
}

}  // namespace affectrl
