#pragma once

// Versioned binary container for named double tensors plus text metadata.
//
// Layout (little-endian): magic "BSPLCKPT", u32 version, u32 metadata count,
// {string key, string value}..., u32 tensor count, {string name, u32 rank,
// u32 dims..., f64 values...}..., u64 FNV-1a hash of everything before it.
// Strings are u32 length + bytes.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsplc/generator.hpp"

namespace bsplc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  struct Tensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> values;
  };

  std::map<std::string, std::string> meta;
  std::vector<Tensor> tensors;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  const Tensor* find(const std::string& name) const;
  /// Appends every entry of `ps` under `prefix`.
  void add_params(const nn::ParamSet& ps, const std::string& prefix);
  /// Copies tensors named prefix+name into `ps`; every entry must be present
  /// with a matching shape.
  void restore_params(nn::ParamSet& ps, const std::string& prefix) const;
};

/// Generator weights plus its configuration echo (meta "generator_config").
void save_generator(const std::filesystem::path& path, const Generator& g);
/// Rebuilds the generator described by the checkpoint.
Generator load_generator(const std::filesystem::path& path);
Generator generator_from_checkpoint(const Checkpoint& ck);
/// Loads weights into an existing generator; a configuration mismatch is an error.
void load_generator_into(const std::filesystem::path& path, Generator& g);

}  // namespace bsplc
