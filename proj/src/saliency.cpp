#include "elnet/saliency.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "elnet/errors.hpp"

namespace fs = std::filesystem;

namespace elnet {

void write_heatmap_files(const HeatmapVolume& h, int64_t target_class,
                         const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("saliency: cannot create " + out_dir + ": " + ec.message());

  for (int64_t s = 0; s < h.s; ++s) {
    char name[32];
    std::snprintf(name, sizeof(name), "slice_%03lld.pgm", static_cast<long long>(s));
    std::ofstream out(fs::path(out_dir) / name, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("saliency: cannot write slice file in " + out_dir);
    out << "P5\n" << h.w << " " << h.h << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(h.w));
    for (int64_t y = 0; y < h.h; ++y) {
      for (int64_t x = 0; x < h.w; ++x) {
        const float v = h.at(s, y, x);
        const int q = static_cast<int>(v * 255.0f + 0.5f);
        row[static_cast<size_t>(x)] = static_cast<unsigned char>(std::min(255, std::max(0, q)));
      }
      out.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw IoError("saliency: write failed in " + out_dir);
  }

  nlohmann::ordered_json j;
  j["target_class"] = target_class;
  j["selected_slice"] = most_informative_slice(h);
  j["slice_scores"] = h.slice_scores;
  std::ofstream out(fs::path(out_dir) / "saliency.json", std::ios::trunc);
  if (!out) throw IoError("saliency: cannot write saliency.json in " + out_dir);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("saliency: json write failed in " + out_dir);
}

}  // namespace elnet
