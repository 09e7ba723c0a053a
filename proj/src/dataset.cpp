#include "elnet/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "elnet/errors.hpp"
#include "elnet/parallel.hpp"
#include "elnet/rng.hpp"

namespace fs = std::filesystem;

namespace elnet {

std::vector<std::pair<std::string, int>> read_labels_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("labels: cannot open " + path);
  std::vector<std::pair<std::string, int>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n'))
      line.pop_back();
    if (line.empty()) continue;
    if (first && line.rfind("exam_id", 0) == 0) {
      first = false;
      continue;
    }
    first = false;
    const size_t comma = line.find(',');
    if (comma == std::string::npos)
      throw IoError("labels: malformed row '" + line + "' in " + path);
    const std::string id = line.substr(0, comma);
    const std::string lab = line.substr(comma + 1);
    if (lab != "0" && lab != "1")
      throw IoError("labels: label must be 0 or 1, got '" + lab + "' in " + path);
    rows.emplace_back(id, lab == "1" ? 1 : 0);
  }
  return rows;
}

void write_labels_csv(const std::string& path,
                      const std::vector<std::pair<std::string, int>>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("labels: cannot write " + path);
  out << "exam_id,label\n";
  for (const auto& [id, lab] : rows) out << id << "," << lab << "\n";
  if (!out) throw IoError("labels: write failed for " + path);
}

void write_synth_dataset(const std::string& dir, const SynthSpec& spec,
                         const std::string& pathology) {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "volumes", ec);
  if (ec) throw IoError("synth: cannot create " + dir + ": " + ec.message());

  const auto examples = synth_dataset(spec);

  std::vector<std::pair<std::string, int>> labels;
  nlohmann::ordered_json manifest;
  manifest["format"] = "elnet-synth-v1";
  manifest["seed"] = spec.seed;
  manifest["n"] = spec.n;
  manifest["slices"] = spec.slices;
  manifest["height"] = spec.height;
  manifest["width"] = spec.width;
  manifest["lesion_rate"] = spec.lesion_rate;
  manifest["orientation"] = to_string(spec.orientation);
  manifest["pathology"] = pathology;
  manifest["exams"] = nlohmann::ordered_json::array();
  for (const auto& ex : examples) {
    write_volume((fs::path(dir) / "volumes" / (ex.volume.exam_id + ".npy")).string(),
                 ex.volume);
    labels.emplace_back(ex.volume.exam_id, ex.label);
    nlohmann::ordered_json j;
    j["id"] = ex.volume.exam_id;
    j["label"] = ex.label;
    j["lesion_lo"] = ex.lesion_lo;
    j["lesion_hi"] = ex.lesion_hi;
    manifest["exams"].push_back(std::move(j));
  }
  write_labels_csv((fs::path(dir) / ("labels-" + pathology + ".csv")).string(),
                   labels);
  std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::trunc);
  if (!mf) throw IoError("synth: cannot write manifest in " + dir);
  mf << manifest.dump(2) << "\n";
  if (!mf) throw IoError("synth: manifest write failed in " + dir);
}

Dataset load_dataset(const std::string& dir, const std::string& pathology,
                     Orientation orientation) {
  if (!fs::is_directory(dir)) throw IoError("dataset: no such directory " + dir);

  // resolve the volume directory
  fs::path vol_dir = fs::path(dir) / to_string(orientation);
  if (!fs::is_directory(vol_dir)) vol_dir = fs::path(dir) / "volumes";
  if (!fs::is_directory(vol_dir)) vol_dir = dir;

  // resolve the labels file
  fs::path labels_path = fs::path(dir) / ("labels-" + pathology + ".csv");
  if (!fs::exists(labels_path)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      if (name.size() > 4 && name.substr(name.size() - 4) == ".csv" &&
          name.find(pathology) != std::string::npos) {
        labels_path = entry.path();
        break;
      }
    }
  }
  if (!fs::exists(labels_path))
    throw IoError("dataset: no labels file for pathology '" + pathology +
                  "' in " + dir);

  const auto rows = read_labels_csv(labels_path.string());
  if (rows.empty()) throw IoError("dataset: empty labels file " + labels_path.string());

  // optional manifest: per-exam orientation + lesion ranges
  std::map<std::string, std::pair<int64_t, int64_t>> lesions;
  Orientation manifest_orient = orientation;
  bool have_manifest_orient = false;
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  if (fs::exists(manifest_path)) {
    std::ifstream mf(manifest_path);
    nlohmann::json manifest;
    try {
      mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
      throw IoError("dataset: malformed manifest in " + dir + ": " + e.what());
    }
    if (manifest.contains("orientation")) {
      manifest_orient = orientation_from_string(manifest["orientation"].get<std::string>());
      have_manifest_orient = true;
    }
    if (manifest.contains("exams"))
      for (const auto& ex : manifest["exams"])
        lesions[ex["id"].get<std::string>()] = {ex["lesion_lo"].get<int64_t>(),
                                                ex["lesion_hi"].get<int64_t>()};
  }

  Dataset ds;
  ds.pathology = pathology;
  ds.volumes.resize(rows.size());
  ds.labels.resize(rows.size());
  ds.lesion_ranges.assign(rows.size(), {-1, -1});
  const Orientation vol_orient = have_manifest_orient ? manifest_orient : orientation;
  parallel_for(static_cast<int64_t>(rows.size()), [&](int64_t i) {
    const auto& [id, label] = rows[static_cast<size_t>(i)];
    const fs::path p = vol_dir / (id + ".npy");
    if (!fs::exists(p))
      throw IoError("dataset: missing volume " + p.string());
    Volume v = read_volume(p.string());
    v.orientation = vol_orient;
    ds.volumes[static_cast<size_t>(i)] = std::move(v);
    ds.labels[static_cast<size_t>(i)] = label;
    auto it = lesions.find(id);
    if (it != lesions.end()) ds.lesion_ranges[static_cast<size_t>(i)] = it->second;
  });
  return ds;
}

std::vector<int64_t> oversample_indices(const std::vector<int>& labels,
                                        uint64_t seed) {
  std::vector<int64_t> pos, neg;
  for (size_t i = 0; i < labels.size(); ++i)
    (labels[i] ? pos : neg).push_back(static_cast<int64_t>(i));
  if (pos.empty() || neg.empty())
    throw std::invalid_argument("oversample: both classes must be present");

  std::vector<int64_t> out;
  out.reserve(2 * std::max(pos.size(), neg.size()));
  for (size_t i = 0; i < labels.size(); ++i) out.push_back(static_cast<int64_t>(i));
  const auto& minority = pos.size() < neg.size() ? pos : neg;
  const int64_t deficit = static_cast<int64_t>(
      std::max(pos.size(), neg.size()) - std::min(pos.size(), neg.size()));
  Rng rng(seed);
  for (int64_t i = 0; i < deficit; ++i)
    out.push_back(minority[static_cast<size_t>(
        rng.uniform_int(static_cast<int64_t>(minority.size())))]);
  return out;
}

}  // namespace elnet
