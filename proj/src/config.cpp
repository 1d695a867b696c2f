#include "darn/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "darn/errors.hpp"

namespace darn {

namespace {

// Raised by value parsers; parse_config prefixes the location and key.
struct BadValue {
  std::string message;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_uint(const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) throw BadValue{"expected a non-negative integer, got '" + v + "'"};
  return out;
}

std::size_t to_positive(const std::string& v) {
  const auto n = to_uint(v);
  if (n == 0) throw BadValue{"must be positive"};
  return n;
}

double to_double(const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) throw BadValue{"expected a number, got '" + v + "'"};
  if (!std::isfinite(out)) throw BadValue{"must be finite"};
  return out;
}

double to_range(const std::string& v, double lo, double hi, bool open_lo) {
  const double x = to_double(v);
  if (x < lo || x > hi || (open_lo && x == lo)) {
    std::ostringstream os;
    os << "must lie in " << (open_lo ? "(" : "[") << lo << ", " << hi << "]";
    throw BadValue{os.str()};
  }
  return x;
}

std::vector<std::size_t> to_list(const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_positive(trim(item)));
  if (out.empty()) throw BadValue{"expected a comma-separated list of positive integers"};
  return out;
}

std::size_t to_fold(const std::string& v) {
  const auto n = to_uint(v);
  if (n != 1 && n != 2) throw BadValue{"must be 1 or 2"};
  return n;
}

using Apply = std::function<void(RunConfig&, const std::string&)>;

struct KeyDef {
  ConfigKey info;
  Apply apply;
};

const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = {
      {{"seed", "0", "master seed for synthesis, initialization and batching"},
       [](RunConfig& c, const std::string& v) { c.seed = to_uint(v); }},
      {{"train.iterations", "2000", "generator updates, warmup included"},
       [](RunConfig& c, const std::string& v) { c.train.iterations = to_positive(v); }},
      {{"train.batch_size", "5", "samples per batch"},
       [](RunConfig& c, const std::string& v) { c.train.batch_size = to_positive(v); }},
      {{"train.warmup", "400", "generator-only iterations before the adversarial term"},
       [](RunConfig& c, const std::string& v) { c.train.warmup_iters = to_uint(v); }},
      {{"train.disc_per_gen", "3", "discriminator ticks per generator tick"},
       [](RunConfig& c, const std::string& v) { c.train.disc_per_gen = to_positive(v); }},
      {{"train.lambda", "1e-4", "adversarial weight; 0 disables the term"},
       [](RunConfig& c, const std::string& v) {
         c.train.lambda = to_double(v);
         if (c.train.lambda < 0.0) throw BadValue{"must be non-negative"};
       }},
      {{"train.lr_start", "1e-4", "learning rate at the first iteration"},
       [](RunConfig& c, const std::string& v) { c.train.lr_start = to_range(v, 0.0, 1.0, true); }},
      {{"train.lr_end", "1e-6", "learning rate at the last iteration"},
       [](RunConfig& c, const std::string& v) { c.train.lr_end = to_range(v, 0.0, 1.0, true); }},
      {{"train.crop_size", "16", "training crop side, also the discriminator patch size"},
       [](RunConfig& c, const std::string& v) {
         const auto n = to_uint(v);
         if (n < 3) throw BadValue{"must be at least 3"};
         c.train.augment.crop = n;
         c.train.discriminator.patch = n;
       }},
      {{"train.checkpoint_fraction", "0.1", "checkpoint cadence as a fraction of all ticks"},
       [](RunConfig& c, const std::string& v) { c.train.checkpoint_fraction = to_range(v, 0.0, 1.0, true); }},
      {{"train.fold", "1", "1 trains on the train partition, 2 on the test partition"},
       [](RunConfig& c, const std::string& v) { c.fold = to_fold(v); }},
      {{"model.features", "16", "generator feature channels"},
       [](RunConfig& c, const std::string& v) { c.train.generator.features = to_positive(v); }},
      {{"model.blocks", "4", "generator residual blocks"},
       [](RunConfig& c, const std::string& v) { c.train.generator.blocks = to_uint(v); }},
      {{"model.target", "shading", "regressed component: shading or albedo"},
       [](RunConfig& c, const std::string& v) {
         try {
           c.train.generator.target = parse_target(v);
         } catch (const ConfigError&) {
           throw BadValue{"expected shading or albedo, got '" + v + "'"};
         }
       }},
      {{"disc.channels", "16,32,64", "discriminator stage widths"},
       [](RunConfig& c, const std::string& v) { c.train.discriminator.channels = to_list(v); }},
      {{"disc.hidden", "64", "discriminator hidden affine width"},
       [](RunConfig& c, const std::string& v) { c.train.discriminator.hidden = to_positive(v); }},
      {{"augment.scale_min", "0.8", "smallest random scale"},
       [](RunConfig& c, const std::string& v) { c.train.augment.scale_min = to_range(v, 0.0, 10.0, true); }},
      {{"augment.scale_max", "1.2", "largest random scale"},
       [](RunConfig& c, const std::string& v) { c.train.augment.scale_max = to_range(v, 0.0, 10.0, true); }},
      {{"augment.max_angle", "15", "largest rotation in degrees"},
       [](RunConfig& c, const std::string& v) { c.train.augment.max_angle_deg = to_range(v, 0.0, 45.0, false); }},
      {{"augment.mirror_prob", "0.5", "probability of a horizontal mirror"},
       [](RunConfig& c, const std::string& v) { c.train.augment.mirror_prob = to_range(v, 0.0, 1.0, false); }},
      {{"data.root", "data", "dataset directory"},
       [](RunConfig& c, const std::string& v) {
         if (v.empty()) throw BadValue{"must not be empty"};
         c.data_root = v;
       }},
      {{"split.mode", "scene", "scene or image"},
       [](RunConfig& c, const std::string& v) {
         try {
           c.split.mode = parse_split_mode(v);
         } catch (const ConfigError&) {
           throw BadValue{"expected scene or image, got '" + v + "'"};
         }
       }},
      {{"split.fraction", "0.8", "share of scenes (or images) in the train partition"},
       [](RunConfig& c, const std::string& v) {
         c.split.fraction = to_range(v, 0.0, 1.0, true);
         if (c.split.fraction == 1.0) throw BadValue{"must be below 1"};
       }},
      {{"split.seed", "0", "seed of the partition shuffle"},
       [](RunConfig& c, const std::string& v) { c.split.seed = to_uint(v); }},
      {{"synth.count", "250", "number of synthesized samples"},
       [](RunConfig& c, const std::string& v) { c.synth_count = to_positive(v); }},
      {{"synth.size", "32", "side of synthesized images"},
       [](RunConfig& c, const std::string& v) {
         const auto n = to_uint(v);
         if (n < 3) throw BadValue{"must be at least 3"};
         c.synth_size = n;
       }},
      {{"synth.rects", "6", "albedo rectangles per scene"},
       [](RunConfig& c, const std::string& v) { c.synth.n_rects = to_uint(v); }},
      {{"synth.lobes", "3", "shading lobes per frame"},
       [](RunConfig& c, const std::string& v) { c.synth.n_lobes = to_positive(v); }},
      {{"synth.shading", "gray", "gray or colored shading"},
       [](RunConfig& c, const std::string& v) {
         if (v == "gray") c.synth.shading_mode = ShadingMode::gray;
         else if (v == "colored") c.synth.shading_mode = ShadingMode::colored;
         else throw BadValue{"expected gray or colored, got '" + v + "'"};
       }},
      {{"synth.min_lobe_width", "0.25", "smallest radial lobe width relative to the image side"},
       [](RunConfig& c, const std::string& v) { c.synth.min_lobe_width = to_range(v, 0.0, 10.0, true); }},
      {{"synth.frames_per_scene", "5", "frames sharing one albedo layout"},
       [](RunConfig& c, const std::string& v) { c.synth.frames_per_scene = to_positive(v); }},
      {{"eval.folds", "1", "1, or 2 for reciprocal two-fold averaging"},
       [](RunConfig& c, const std::string& v) { c.eval_folds = to_fold(v); }},
  };
  return defs;
}

const KeyDef* find_key(const std::string& key) {
  for (const auto& d : key_defs()) {
    if (d.info.key == key) return &d;
  }
  return nullptr;
}

struct Entry {
  std::string value;
  std::string origin;  // "file:line", "--set", ...
};

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& d : key_defs()) out.push_back(d.info);
    return out;
  }();
  return keys;
}

std::optional<std::string> seed_from_environment() {
  const char* v = std::getenv("DARN_SEED");
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

RunConfig parse_config(const std::filesystem::path& path, const std::vector<Override>& overrides,
                       const std::optional<std::string>& environment_seed) {
  std::map<std::string, Entry> entries;
  for (const auto& d : key_defs()) entries[d.info.key] = {d.info.default_value, "default"};
  if (environment_seed) entries["seed"] = {trim(*environment_seed), "DARN_SEED"};

  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
      ++number;
      const std::string where = path.string() + ":" + std::to_string(number);
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
      const std::string key = trim(line.substr(0, eq));
      if (!find_key(key)) throw ConfigError(where + ": unknown key '" + key + "'");
      entries[key] = {trim(line.substr(eq + 1)), where};
    }
  }
  for (const auto& o : overrides) {
    if (!find_key(o.key)) throw ConfigError("override: unknown key '" + o.key + "'");
    entries[o.key] = {trim(o.value), "override"};
  }

  RunConfig config;
  for (const auto& d : key_defs()) {
    const Entry& e = entries.at(d.info.key);
    try {
      d.apply(config, e.value);
    } catch (const BadValue& bad) {
      throw ConfigError(e.origin + ": key '" + d.info.key + "': " + bad.message);
    }
    config.values[d.info.key] = e.value;
  }
  config.train.seed = config.seed;

  auto check = [&](bool ok, const std::string& key, const std::string& message) {
    if (!ok) throw ConfigError(entries.at(key).origin + ": key '" + key + "': " + message);
  };
  check(config.train.lr_end <= config.train.lr_start, "train.lr_end", "must not exceed train.lr_start");
  check(config.train.augment.scale_min <= config.train.augment.scale_max, "augment.scale_max",
        "must not be below augment.scale_min");
  config.train.validate();
  return config;
}

void dump_config(std::ostream& out, const RunConfig& config) {
  for (const auto& [key, value] : config.values) out << key << " = " << value << "\n";
}

void write_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  dump_config(out, config);
}

}  // namespace darn
