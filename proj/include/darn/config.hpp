#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "darn/data.hpp"
#include "darn/training.hpp"

namespace darn {

// Fully resolved settings of one CLI invocation.
struct RunConfig {
  std::uint64_t seed = 0;
  TrainConfig train;
  std::size_t fold = 1;  // 2 trains on the held-out partition
  std::string data_root = "data";
  SplitSpec split;
  SynthConfig synth;
  std::size_t synth_count = 200;
  std::size_t synth_size = 32;
  std::size_t eval_folds = 1;

  // Canonical "key = value" text of every setting, sorted by key.
  std::map<std::string, std::string> values;
};

struct ConfigKey {
  std::string key;
  std::string default_value;
  std::string help;
};

// Every accepted key with its documented default.
const std::vector<ConfigKey>& config_keys();

struct Override {
  std::string key;
  std::string value;
};

// Layers, lowest priority first: documented defaults, DARN_SEED (when
// `environment_seed` is set), the file at `path` (if non-empty), `overrides`.
// Throws ConfigError naming the key (and line, for file entries).
RunConfig parse_config(const std::filesystem::path& path, const std::vector<Override>& overrides,
                       const std::optional<std::string>& environment_seed = std::nullopt);

// Reads DARN_SEED from the process environment.
std::optional<std::string> seed_from_environment();

void dump_config(std::ostream& out, const RunConfig& config);
void write_config(const std::filesystem::path& path, const RunConfig& config);

}  // namespace darn
