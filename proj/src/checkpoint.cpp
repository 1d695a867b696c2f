#include "darn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "darn/data.hpp"
#include "darn/errors.hpp"

namespace darn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'A', 'R', 'N', 'C', 'K', 'P', 'T'};

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<std::size_t> split_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoull(item));
  return out;
}

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("checkpoint truncated");
  return v;
}

std::string get_string(std::istream& is, std::size_t limit) {
  const auto n = get<std::uint32_t>(is);
  if (n > limit) throw DataError("checkpoint string length out of range");
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw DataError("checkpoint truncated");
  return s;
}

const std::string& arch(const CheckpointContents& c, const std::string& key) {
  auto it = c.architecture.find(key);
  if (it == c.architecture.end()) throw DataError("checkpoint architecture lacks '" + key + "'");
  return it->second;
}

void load_into(const std::map<std::string, const CheckpointArray*>& arrays, const std::string& name, Tensor tensor) {
  auto it = arrays.find(name);
  if (it == arrays.end()) throw DataError("checkpoint lacks array '" + name + "'");
  if (it->second->shape != tensor.shape()) {
    throw DataError("checkpoint array '" + name + "' has shape " + shape_string(it->second->shape) + ", expected " +
                    shape_string(tensor.shape()));
  }
  auto dst = tensor.mutable_values();
  std::copy(it->second->values.begin(), it->second->values.end(), dst.begin());
}

}  // namespace

ModelParams ModelParams::create(const GeneratorConfig& gen, const DiscriminatorConfig& disc, std::uint64_t seed) {
  return {Generator(gen, derive_seed(seed, 0)), Discriminator(disc, derive_seed(seed, 1)), Discriminator(disc, derive_seed(seed, 2))};
}

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointContents& contents) {
  std::ostringstream os(std::ios::binary);
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kCheckpointVersion);
  std::string block;
  for (const auto& [k, v] : contents.architecture) block += k + "=" + v + "\n";
  put<std::uint32_t>(os, static_cast<std::uint32_t>(block.size()));
  os.write(block.data(), static_cast<std::streamsize>(block.size()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(contents.arrays.size()));
  for (const auto& a : contents.arrays) {
    if (shape_numel(a.shape) != a.values.size()) throw ShapeError("checkpoint array '" + a.name + "' inconsistent");
    put<std::uint32_t>(os, static_cast<std::uint32_t>(a.name.size()));
    os.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(a.shape.size()));
    for (std::size_t e : a.shape) put<std::uint64_t>(os, e);
    os.write(reinterpret_cast<const char*>(a.values.data()), static_cast<std::streamsize>(a.values.size() * sizeof(double)));
  }
  // Write to a sibling file first so a crash never leaves a torn checkpoint.
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write checkpoint " + tmp);
    const std::string bytes = os.str();
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

CheckpointContents read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw DataError(path.string() + " is not a checkpoint file");
  }
  const auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  CheckpointContents c;
  std::istringstream block(get_string(is, 1u << 20));
  std::string line;
  while (std::getline(block, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("malformed checkpoint architecture line '" + line + "'");
    c.architecture[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto count = get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointArray a;
    a.name = get_string(is, 4096);
    const auto rank = get<std::uint32_t>(is);
    if (rank > 8) throw DataError("checkpoint array rank out of range");
    for (std::uint32_t r = 0; r < rank; ++r) a.shape.push_back(get<std::uint64_t>(is));
    const std::size_t n = shape_numel(a.shape);
    if (n > (std::size_t{1} << 32)) throw DataError("checkpoint array too large");
    a.values.resize(n);
    if (n && !is.read(reinterpret_cast<char*>(a.values.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
      throw DataError("checkpoint truncated");
    }
    c.arrays.push_back(std::move(a));
  }
  return c;
}

CheckpointContents snapshot(ModelParams& model) {
  CheckpointContents c;
  const auto& g = model.generator.config();
  const auto& d = model.disc_albedo.config();
  c.architecture["generator.features"] = std::to_string(g.features);
  c.architecture["generator.blocks"] = std::to_string(g.blocks);
  c.architecture["generator.target"] = to_string(g.target);
  c.architecture["generator.running_stats"] = model.generator.running_stats_initialized() ? "1" : "0";
  c.architecture["discriminator.patch"] = std::to_string(d.patch);
  c.architecture["discriminator.channels"] = join(d.channels);
  c.architecture["discriminator.hidden"] = std::to_string(d.hidden);

  auto add = [&](const std::string& prefix, const std::vector<NamedTensor>& params) {
    for (const auto& p : params) {
      c.arrays.push_back({prefix + p.name, p.tensor.shape(), std::vector<double>(p.tensor.values().begin(), p.tensor.values().end())});
    }
  };
  add("gen.", model.generator.parameters());
  const auto names = model.generator.norm_names();
  const auto stats = model.generator.norm_stats();
  for (std::size_t i = 0; i < names.size(); ++i) {
    c.arrays.push_back({"gen." + names[i] + ".running_mean", {stats[i]->mean.size()}, stats[i]->mean});
    c.arrays.push_back({"gen." + names[i] + ".running_var", {stats[i]->var.size()}, stats[i]->var});
  }
  add("disc_albedo.", model.disc_albedo.parameters());
  add("disc_shading.", model.disc_shading.parameters());
  return c;
}

ModelParams restore(const CheckpointContents& contents) {
  GeneratorConfig g;
  DiscriminatorConfig d;
  try {
    g.features = std::stoull(arch(contents, "generator.features"));
    g.blocks = std::stoull(arch(contents, "generator.blocks"));
    g.target = parse_target(arch(contents, "generator.target"));
    d.patch = std::stoull(arch(contents, "discriminator.patch"));
    d.channels = split_sizes(arch(contents, "discriminator.channels"));
    d.hidden = std::stoull(arch(contents, "discriminator.hidden"));
  } catch (const std::logic_error& e) {
    throw DataError(std::string("malformed checkpoint architecture: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("malformed checkpoint architecture: ") + e.what());
  }
  ModelParams model = ModelParams::create(g, d, 0);
  std::map<std::string, const CheckpointArray*> arrays;
  for (const auto& a : contents.arrays) arrays[a.name] = &a;
  for (const auto& p : model.generator.parameters()) load_into(arrays, "gen." + p.name, p.tensor);
  const auto names = model.generator.norm_names();
  const auto stats = model.generator.norm_stats();
  for (std::size_t i = 0; i < names.size(); ++i) {
    for (auto [suffix, dst] : {std::pair{".running_mean", &stats[i]->mean}, std::pair{".running_var", &stats[i]->var}}) {
      auto it = arrays.find("gen." + names[i] + suffix);
      if (it == arrays.end() || it->second->values.size() != dst->size()) {
        throw DataError("checkpoint lacks or mis-sizes gen." + names[i] + suffix);
      }
      *dst = it->second->values;
    }
  }
  model.generator.set_running_stats_initialized(arch(contents, "generator.running_stats") == "1");
  for (const auto& p : model.disc_albedo.parameters()) load_into(arrays, "disc_albedo." + p.name, p.tensor);
  for (const auto& p : model.disc_shading.parameters()) load_into(arrays, "disc_shading." + p.name, p.tensor);
  return model;
}

void save_checkpoint(const std::filesystem::path& path, ModelParams& model) {
  write_checkpoint_file(path, snapshot(model));
}

ModelParams load_checkpoint(const std::filesystem::path& path) { return restore(read_checkpoint_file(path)); }

void require_architecture(const ModelParams& model, const GeneratorConfig& gen, const DiscriminatorConfig& disc) {
  const auto& g = model.generator.config();
  const auto& d = model.disc_albedo.config();
  if (g.features != gen.features || g.blocks != gen.blocks || g.target != gen.target || d.patch != disc.patch ||
      d.channels != disc.channels || d.hidden != disc.hidden) {
    throw DataError("checkpoint architecture does not match the configuration (checkpoint: " +
                    std::to_string(g.blocks) + " blocks x " + std::to_string(g.features) + " features, target " +
                    to_string(g.target) + ")");
  }
}

std::uint64_t hash_parameters(const std::vector<NamedTensor>& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : params) {
    for (double v : p.tensor.values()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof v);
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
      }
    }
  }
  return h;
}

}  // namespace darn
