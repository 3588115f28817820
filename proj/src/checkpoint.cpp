#include "affectrl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace affectrl {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'A', 'F', 'L', 'M'};

void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  uint32_t u32() {
    uint32_t v = 0;
    read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  }
  std::string str(size_t n) {
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  void doubles(double* dst, size_t n) { read(reinterpret_cast<char*>(dst), n * sizeof(double)); }

 private:
  void read(char* dst, size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in_.gcount()) != n)
      throw std::runtime_error("truncated checkpoint file");
  }
  std::istream& in_;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [block_name, tensor] : blocks)
    if (block_name == name) return &tensor;
  return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, Checkpoint::kVersion);
  write_u32(out, static_cast<uint32_t>(ckpt.config.vocab_size));
  write_u32(out, static_cast<uint32_t>(ckpt.config.d_model));
  write_u32(out, static_cast<uint32_t>(ckpt.config.n_layers));
  write_u32(out, static_cast<uint32_t>(ckpt.config.n_heads));
  write_u32(out, static_cast<uint32_t>(ckpt.config.max_seq_len));
  write_u32(out, static_cast<uint32_t>(ckpt.blocks.size()));
  for (const auto& [name, tensor] : ckpt.blocks) {
    write_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<uint32_t>(tensor.ndim()));
    for (int d : tensor.shape()) write_u32(out, static_cast<uint32_t>(d));
    out.write(reinterpret_cast<const char*>(tensor.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(tensor.numel())));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  Reader r(in);
  const std::string magic = r.str(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path);
  const uint32_t version = r.u32();
  if (version != Checkpoint::kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  ckpt.config.vocab_size = static_cast<int>(r.u32());
  ckpt.config.d_model = static_cast<int>(r.u32());
  ckpt.config.n_layers = static_cast<int>(r.u32());
  ckpt.config.n_heads = static_cast<int>(r.u32());
  ckpt.config.max_seq_len = static_cast<int>(r.u32());
  ckpt.config.validate();

  const uint32_t n_blocks = r.u32();
  for (uint32_t b = 0; b < n_blocks; ++b) {
    const uint32_t name_len = r.u32();
    if (name_len > 4096) throw std::runtime_error("corrupt checkpoint block name in " + path);
    const std::string name = r.str(name_len);
    const uint32_t ndim = r.u32();
    if (ndim == 0 || ndim > 8) throw std::runtime_error("corrupt checkpoint block shape in " + path);
    std::vector<int> shape(ndim);
    size_t numel = 1;
    for (uint32_t i = 0; i < ndim; ++i) {
      shape[i] = static_cast<int>(r.u32());
      if (shape[i] <= 0 || numel > (1u << 28))
        throw std::runtime_error("corrupt checkpoint block shape in " + path);
      numel *= static_cast<size_t>(shape[i]);
    }
    std::vector<double> data(numel);
    r.doubles(data.data(), numel);
    ckpt.blocks.emplace_back(name, Tensor::from_data(std::move(shape), std::move(data)));
  }
  char extra;
  if (in.get(extra)) throw std::runtime_error("trailing bytes in checkpoint " + path);
  return ckpt;
}

Checkpoint checkpoint_from_lm(const TransformerLM& model) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  for (const auto& [name, tensor] : model.named_parameters())
    ckpt.blocks.emplace_back(name, tensor.clone());
  return ckpt;
}

TransformerLM lm_from_checkpoint(const Checkpoint& ckpt) {
  TransformerLM model = TransformerLM::init(ckpt.config, /*seed=*/0);
  for (auto& [name, param] : model.named_parameters()) {
    const Tensor* block = ckpt.find(name);
    if (block == nullptr)
      throw std::runtime_error("checkpoint missing parameter block: " + name);
    if (block->shape() != param.shape())
      throw std::runtime_error("checkpoint block shape mismatch: " + name);
    std::copy(block->values().begin(), block->values().end(), param.values().begin());
  }
  return model;
}

}  // namespace affectrl
