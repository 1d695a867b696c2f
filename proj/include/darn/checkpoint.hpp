#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "darn/model.hpp"

namespace darn {

// Every learnable weight of the generator and both discriminators, plus the
// architecture needed to rebuild them.
struct ModelParams {
  Generator generator;
  Discriminator disc_albedo;
  Discriminator disc_shading;

  static ModelParams create(const GeneratorConfig& gen, const DiscriminatorConfig& disc, std::uint64_t seed);
};

// Binary container, little-endian:
//   "DARNCKPT"  8 bytes magic
//   u32         format version (kCheckpointVersion)
//   u32 + bytes architecture block, "key=value\n" lines
//   u32         array count
//   per array:  u32 name length, name bytes, u32 rank, u64 extents[rank],
//               f64 values[prod(extents)]
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct CheckpointContents {
  std::map<std::string, std::string> architecture;
  std::vector<CheckpointArray> arrays;
};

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointContents& contents);
CheckpointContents read_checkpoint_file(const std::filesystem::path& path);

CheckpointContents snapshot(ModelParams& model);
ModelParams restore(const CheckpointContents& contents);

void save_checkpoint(const std::filesystem::path& path, ModelParams& model);
ModelParams load_checkpoint(const std::filesystem::path& path);

// Throws DataError when the checkpoint's architecture differs from the request.
void require_architecture(const ModelParams& model, const GeneratorConfig& gen, const DiscriminatorConfig& disc);

// FNV-1a over the raw bytes of the given tensors' values.
std::uint64_t hash_parameters(const std::vector<NamedTensor>& params);

}  // namespace darn
