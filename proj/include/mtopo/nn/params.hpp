#pragma once

#include "mtopo/nn/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace mtopo::nn {

enum class Init {
  KaimingUniform,  // U(-1/sqrt(rows), 1/sqrt(rows)); rows is fan-in
  Zeros,
  Ones,
  Normal,          // N(0, 1)
};

/// Named trainable tensors with their Adam moments. Iteration is in name
/// order, which fixes the byte layout of checkpoints.
class ParamStore {
 public:
  struct Entry {
    Var var;
    Matrix m;  // first moment
    Matrix v;  // second moment
  };

  /// Each tensor's initial value depends only on (seed, name), so adding or
  /// removing unrelated parameters never changes it.
  Var create(const std::string& name, Eigen::Index rows, Eigen::Index cols, Init init,
             std::uint64_t seed);

  Var get(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t num_scalars() const;

  /// Overwrites a value (shape must match).
  void assign(const std::string& name, const Matrix& value);

  void zero_grad();
  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  std::int64_t step_count = 0;

 private:
  std::map<std::string, Entry> entries_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update over every parameter that has a gradient.
void adam_step(ParamStore& store, const AdamConfig& cfg);

/// Binary checkpoint: magic "MTCK", u32 version, u32-length descriptor,
/// u32 tensor count, then per tensor (u32-length name, u32 rows, u32 cols,
/// rows*cols little-endian f64). Tensors are written in name order.
struct Checkpoint {
  std::string descriptor;
  std::map<std::string, Matrix> tensors;
};

void write_checkpoint(std::ostream& out, const ParamStore& store, const std::string& descriptor,
                      const std::string& prefix = "");
void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     const std::string& descriptor, const std::string& prefix = "");
Checkpoint read_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mtopo::nn
