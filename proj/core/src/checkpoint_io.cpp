#include "dawgen/checkpoint_io.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include "dawgen/error.hpp"

namespace dawgen {

namespace {

using Kind = CheckpointError::Kind;

void put_u32(std::ostream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& f, double d) {
  auto v = std::bit_cast<std::uint64_t>(d);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  f.write(reinterpret_cast<const char*>(b), 8);
}

void put_str(std::ostream& f, const std::string& s) {
  put_u32(f, static_cast<std::uint32_t>(s.size()));
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& f, const std::string& path) {
  unsigned char b[4];
  if (!f.read(reinterpret_cast<char*>(b), 4))
    throw CheckpointError(Kind::Truncated, path + ": unexpected end of file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

double get_f64(std::istream& f, const std::string& path) {
  unsigned char b[8];
  if (!f.read(reinterpret_cast<char*>(b), 8))
    throw CheckpointError(Kind::Truncated, path + ": unexpected end of file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

std::string get_str(std::istream& f, const std::string& path) {
  std::uint32_t n = get_u32(f, path);
  std::string s(n, '\0');
  if (n > 0 && !f.read(s.data(), n))
    throw CheckpointError(Kind::Truncated, path + ": unexpected end of file");
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  if (c.shapes.size() != c.payloads.size())
    throw Error("save_checkpoint: shapes and payloads differ in count");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open for writing: " + path);
  f.write("DWGN", 4);
  put_u32(f, kCheckpointVersion);
  put_u32(f, static_cast<std::uint32_t>(c.vocab.size()));
  for (const auto& tok : c.vocab) put_str(f, tok);
  put_u32(f, static_cast<std::uint32_t>(c.dims.vocab_size));
  put_u32(f, static_cast<std::uint32_t>(c.dims.d_model));
  put_u32(f, static_cast<std::uint32_t>(c.dims.n_heads));
  put_u32(f, static_cast<std::uint32_t>(c.dims.n_layers));
  put_u32(f, static_cast<std::uint32_t>(c.dims.d_ff));
  put_u32(f, static_cast<std::uint32_t>(c.dims.max_seq));
  put_u32(f, static_cast<std::uint32_t>(c.shapes.size()));
  for (std::size_t i = 0; i < c.shapes.size(); ++i) {
    const auto& [name, shape] = c.shapes[i];
    put_str(f, name);
    put_u32(f, static_cast<std::uint32_t>(shape.size()));
    std::size_t count = 1;
    for (int d : shape) {
      put_u32(f, static_cast<std::uint32_t>(d));
      count *= static_cast<std::size_t>(d);
    }
    if (count != c.payloads[i].size())
      throw Error("save_checkpoint: payload size does not match shape for " + name);
    for (double v : c.payloads[i]) put_f64(f, v);
  }
  f.flush();
  if (!f) throw Error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open: " + path);
  char magic[4];
  if (!f.read(magic, 4))
    throw CheckpointError(Kind::Truncated, path + ": unexpected end of file");
  if (std::string(magic, 4) != "DWGN")
    throw CheckpointError(Kind::BadMagic, path + ": not a model checkpoint");
  std::uint32_t version = get_u32(f, path);
  if (version != kCheckpointVersion)
    throw CheckpointError(Kind::VersionMismatch,
                          path + ": format version " + std::to_string(version) +
                              ", expected " + std::to_string(kCheckpointVersion));
  Checkpoint c;
  std::uint32_t nv = get_u32(f, path);
  c.vocab.reserve(nv);
  for (std::uint32_t i = 0; i < nv; ++i) c.vocab.push_back(get_str(f, path));
  c.dims.vocab_size = static_cast<int>(get_u32(f, path));
  c.dims.d_model = static_cast<int>(get_u32(f, path));
  c.dims.n_heads = static_cast<int>(get_u32(f, path));
  c.dims.n_layers = static_cast<int>(get_u32(f, path));
  c.dims.d_ff = static_cast<int>(get_u32(f, path));
  c.dims.max_seq = static_cast<int>(get_u32(f, path));
  std::uint32_t nt = get_u32(f, path);
  for (std::uint32_t i = 0; i < nt; ++i) {
    std::string name = get_str(f, path);
    std::uint32_t nd = get_u32(f, path);
    std::vector<int> shape;
    std::size_t count = 1;
    for (std::uint32_t k = 0; k < nd; ++k) {
      shape.push_back(static_cast<int>(get_u32(f, path)));
      count *= static_cast<std::size_t>(shape.back());
    }
    std::vector<double> vals(count);
    for (auto& v : vals) v = get_f64(f, path);
    c.shapes.emplace_back(std::move(name), std::move(shape));
    c.payloads.push_back(std::move(vals));
  }
  // trailing garbage means the file is not what it claims to be
  if (f.peek() != std::ifstream::traits_type::eof())
    throw CheckpointError(Kind::ShapeMismatch, path + ": trailing bytes after tensors");
  return c;
}

void save_model(const std::string& path, const Model& m,
                const std::vector<std::string>& vocab) {
  Checkpoint c;
  c.vocab = vocab;
  c.dims = m.dims();
  for (const auto& [name, t] : m.named_parameters()) {
    c.shapes.emplace_back(name, t.shape());
    c.payloads.push_back(t.values());
  }
  save_checkpoint(path, c);
}

Model load_model(const std::string& path, std::vector<std::string>* vocab_out) {
  Checkpoint c = load_checkpoint(path);
  Model m(c.dims, 0);
  auto params = m.named_parameters();
  if (params.size() != c.shapes.size())
    throw CheckpointError(Kind::ShapeMismatch,
                          path + ": tensor count does not match the architecture");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, t] = params[i];
    if (c.shapes[i].first != name)
      throw CheckpointError(Kind::ShapeMismatch,
                            path + ": expected tensor " + name + ", found " +
                                c.shapes[i].first);
    if (c.shapes[i].second != t.shape())
      throw CheckpointError(Kind::ShapeMismatch,
                            path + ": shape mismatch for " + name);
    t.set_values(c.payloads[i]);
  }
  if (vocab_out) *vocab_out = std::move(c.vocab);
  return m;
}

void save_prompt(const std::string& path, const Tensor& prompt,
                 const ModelDims& dims) {
  Checkpoint c;
  c.dims = dims;
  c.shapes.emplace_back("prompt", prompt.shape());
  c.payloads.push_back(prompt.values());
  save_checkpoint(path, c);
}

Tensor load_prompt(const std::string& path, const ModelDims& expected) {
  Checkpoint c = load_checkpoint(path);
  if (!(c.dims == expected))
    throw CheckpointError(Kind::ShapeMismatch,
                          path + ": prompt was tuned for a different backbone");
  if (c.shapes.size() != 1 || c.shapes[0].first != "prompt")
    throw CheckpointError(Kind::ShapeMismatch, path + ": not a prompt checkpoint");
  const auto& shape = c.shapes[0].second;
  if (shape.size() != 2 || shape[1] != expected.d_model)
    throw CheckpointError(Kind::ShapeMismatch, path + ": prompt shape mismatch");
  return Tensor::from(shape, std::move(c.payloads[0]), true);
}

}  // namespace dawgen
