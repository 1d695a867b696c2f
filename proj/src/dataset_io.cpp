#include "darn/dataset_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "darn/errors.hpp"
#include "darn/png_io.hpp"

namespace darn {

namespace fs = std::filesystem;

namespace {

int parse_frame(const std::string& filename) {
  int frame = -1;
  char tail = 0;
  if (std::sscanf(filename.c_str(), "frame_%d.pn%c", &frame, &tail) != 2 || tail != 'g') return -1;
  return frame;
}

Sample load_entry(const fs::path& root, const ManifestEntry& e, int frame) {
  Sample s;
  s.id = e.id;
  s.scene = e.scene;
  s.frame = frame;
  s.albedo = load_image(root / e.albedo);
  s.shading = load_image(root / e.shading);
  require_same_dims(s.albedo, s.shading, e.id.c_str());
  s.image = recompose(s.albedo, s.shading).image;
  return s;
}

}  // namespace

std::string frame_file(int frame) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04d.png", frame);
  return buf;
}

void write_dataset(const fs::path& root, const std::vector<Sample>& samples) {
  std::vector<ManifestEntry> entries;
  for (const auto& s : samples) {
    const fs::path scene = s.scene;
    ManifestEntry e{s.id, s.scene, (scene / "clean" / frame_file(s.frame)).string(),
                    (scene / "albedo" / frame_file(s.frame)).string(), (scene / "shading" / frame_file(s.frame)).string()};
    for (const char* sub : {"clean", "albedo", "shading"}) fs::create_directories(root / scene / sub);
    save_image(root / e.clean, s.image);
    save_image(root / e.albedo, s.albedo);
    save_image(root / e.shading, s.shading);
    entries.push_back(std::move(e));
  }
  write_manifest(root / "manifest.txt", entries);
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    ManifestEntry e;
    if (!(ss >> e.id >> e.scene >> e.clean >> e.albedo >> e.shading)) {
      throw DataError(path.string() + ":" + std::to_string(number) + ": expected 5 fields");
    }
    out.push_back(std::move(e));
  }
  return out;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << "# id scene clean albedo shading\n";
  for (const auto& e : entries) out << e.id << ' ' << e.scene << ' ' << e.clean << ' ' << e.albedo << ' ' << e.shading << '\n';
}

std::vector<Sample> load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("dataset directory " + root.string() + " does not exist");
  std::vector<Sample> out;
  if (fs::exists(root / "manifest.txt")) {
    for (const auto& e : read_manifest(root / "manifest.txt")) {
      out.push_back(load_entry(root, e, parse_frame(fs::path(e.albedo).filename().string())));
    }
  } else {
    std::vector<fs::path> scenes;
    for (const auto& d : fs::directory_iterator(root)) {
      if (d.is_directory()) scenes.push_back(d.path());
    }
    std::sort(scenes.begin(), scenes.end());
    for (const auto& scene : scenes) {
      if (!fs::is_directory(scene / "albedo")) continue;
      std::vector<int> frames;
      for (const auto& f : fs::directory_iterator(scene / "albedo")) {
        const int frame = parse_frame(f.path().filename().string());
        if (frame >= 0 && fs::exists(scene / "shading" / f.path().filename())) frames.push_back(frame);
      }
      std::sort(frames.begin(), frames.end());
      const std::string name = scene.filename().string();
      for (int frame : frames) {
        const std::string file = frame_file(frame);
        ManifestEntry e{name + "_" + file.substr(0, file.size() - 4), name, name + "/clean/" + file,
                        name + "/albedo/" + file, name + "/shading/" + file};
        out.push_back(load_entry(root, e, frame));
      }
    }
  }
  if (out.empty()) throw DataError("no samples found under " + root.string());
  std::stable_sort(out.begin(), out.end(), [](const Sample& a, const Sample& b) {
    return a.scene != b.scene ? a.scene < b.scene : a.frame < b.frame;
  });
  return out;
}

void write_split_file(const fs::path& path, const std::vector<std::string>& ids) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write split file " + path.string());
  for (const auto& id : ids) out << id << '\n';
}

std::vector<std::string> read_split_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split file " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') ids.push_back(line);
  }
  return ids;
}

}  // namespace darn
