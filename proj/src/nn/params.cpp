#include "mtopo/nn/params.hpp"

#include "mtopo/error.hpp"
#include "mtopo/rng.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace mtopo::nn {

Var ParamStore::create(const std::string& name, Eigen::Index rows, Eigen::Index cols, Init init,
                       std::uint64_t seed) {
  if (entries_.count(name)) fail(ErrorCode::InvalidArgument, "duplicate parameter " + name);
  Matrix value(rows, cols);
  Rng rng(derive_seed(seed, name));
  switch (init) {
    case Init::KaimingUniform: {
      const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
      for (Eigen::Index i = 0; i < value.size(); ++i) value.data()[i] = uniform(rng, -bound, bound);
      break;
    }
    case Init::Zeros: value.setZero(); break;
    case Init::Ones: value.setOnes(); break;
    case Init::Normal:
      for (Eigen::Index i = 0; i < value.size(); ++i) value.data()[i] = normal(rng);
      break;
  }
  Entry e{Var::leaf(std::move(value), true), Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)};
  Var v = e.var;
  entries_.emplace(name, std::move(e));
  return v;
}

Var ParamStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) fail(ErrorCode::ArchitectureMismatch, "missing parameter " + name);
  return it->second.var;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  for (const auto& [n, e] : entries_) out.push_back(n);
  return out;
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += static_cast<std::size_t>(e.var.value().size());
  return n;
}

void ParamStore::assign(const std::string& name, const Matrix& value) {
  Var v = get(name);
  if (v.rows() != value.rows() || v.cols() != value.cols()) {
    fail(ErrorCode::ArchitectureMismatch, "shape mismatch for parameter " + name);
  }
  v.mutable_value() = value;
}

void ParamStore::zero_grad() {
  for (auto& [name, e] : entries_) e.var.zero_grad();
}

void adam_step(ParamStore& store, const AdamConfig& cfg) {
  ++store.step_count;
  const double t = static_cast<double>(store.step_count);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, e] : store.entries()) {
    if (!e.var.has_grad()) continue;
    const Matrix g = e.var.grad();
    e.m = cfg.beta1 * e.m + (1.0 - cfg.beta1) * g;
    e.v = cfg.beta2 * e.v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    e.var.mutable_value().array() -=
        cfg.lr * (e.m.array() / c1) / ((e.v.array() / c2).sqrt() + cfg.eps);
  }
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'M', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) fail(ErrorCode::Parse, "checkpoint truncated");
  return v;
}

void put_str(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_str(std::istream& in) {
  const auto n = get_u32(in);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) fail(ErrorCode::Parse, "checkpoint truncated");
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParamStore& store, const std::string& descriptor,
                      const std::string& prefix) {
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_str(out, descriptor);
  std::uint32_t count = 0;
  for (const auto& [name, e] : store.entries()) {
    if (name.rfind(prefix, 0) == 0) ++count;
  }
  put_u32(out, count);
  for (const auto& [name, e] : store.entries()) {
    if (name.rfind(prefix, 0) != 0) continue;
    put_str(out, name);
    const Matrix& m = e.var.value();
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
  }
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     const std::string& descriptor, const std::string& prefix) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  write_checkpoint(out, store, descriptor, prefix);
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    fail(ErrorCode::Parse, "not a checkpoint (bad magic)");
  }
  if (get_u32(in) != kVersion) fail(ErrorCode::Parse, "unsupported checkpoint version");
  Checkpoint ck;
  ck.descriptor = get_str(in);
  const auto count = get_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_str(in);
    const auto rows = get_u32(in);
    const auto cols = get_u32(in);
    Matrix m(rows, cols);
    if (m.size() && !in.read(reinterpret_cast<char*>(m.data()),
                             static_cast<std::streamsize>(sizeof(double) * m.size()))) {
      fail(ErrorCode::Parse, "checkpoint truncated");
    }
    ck.tensors.emplace(std::move(name), std::move(m));
  }
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace mtopo::nn
