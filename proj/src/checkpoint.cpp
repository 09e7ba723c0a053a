#include "elnet/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "elnet/errors.hpp"

namespace elnet {

namespace {

constexpr char kMagic[4] = {'E', 'L', 'N', 'T'};
constexpr uint16_t kVersion = 1;

void put_u16(std::ostream& out, uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint16_t get_u16(std::istream& in) {
  unsigned char b[2];
  if (!in.read(reinterpret_cast<char*>(b), 2))
    throw IoError("checkpoint: truncated file");
  return static_cast<uint16_t>(b[0]) | static_cast<uint16_t>(b[1]) << 8;
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw IoError("checkpoint: truncated file");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

void put_f32_values(std::ostream& out, const std::vector<float>& values) {
  std::vector<unsigned char> raw(values.size() * 4);
  for (size_t i = 0; i < values.size(); ++i) {
    uint32_t u;
    std::memcpy(&u, &values[i], 4);
    for (int b = 0; b < 4; ++b)
      raw[i * 4 + static_cast<size_t>(b)] = static_cast<unsigned char>((u >> (8 * b)) & 0xff);
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
}

std::vector<float> get_f32_values(std::istream& in, size_t count) {
  std::vector<unsigned char> raw(count * 4);
  if (!in.read(reinterpret_cast<char*>(raw.data()),
               static_cast<std::streamsize>(raw.size())))
    throw IoError("checkpoint: truncated parameter payload");
  std::vector<float> values(count);
  for (size_t i = 0; i < count; ++i) {
    uint32_t u = 0;
    for (int b = 0; b < 4; ++b)
      u |= static_cast<uint32_t>(raw[i * 4 + static_cast<size_t>(b)]) << (8 * b);
    std::memcpy(&values[i], &u, 4);
  }
  return values;
}

void put_blob(std::ostream& out, const std::string& name,
              const std::vector<int64_t>& dims, const std::vector<float>& values) {
  put_u32(out, static_cast<uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(out, static_cast<uint32_t>(dims.size()));
  for (int64_t d : dims) put_u32(out, static_cast<uint32_t>(d));
  put_f32_values(out, values);
}

}  // namespace

std::string config_to_text(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "k=" << cfg.k << "\n";
  os << "norm=" << to_string(cfg.norm) << "\n";
  os << "pool=" << to_string(cfg.pool) << "\n";
  os << "blur_b=";
  for (size_t i = 0; i < cfg.blur_b.size(); ++i)
    os << (i ? "," : "") << cfg.blur_b[i];
  os << "\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", cfg.dropout_rate);
  os << "dropout=" << buf << "\n";
  os << "input_h=" << cfg.input_h << "\n";
  os << "input_w=" << cfg.input_w << "\n";
  os << "seed=" << cfg.seed << "\n";
  os << "stages=" << cfg.stages << "\n";
  return os.str();
}

ModelConfig config_from_text(const std::string& text) {
  ModelConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError("checkpoint: malformed config line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "k") {
      cfg.k = std::stoll(val);
    } else if (key == "norm") {
      cfg.norm = norm_variant_from_string(val);
    } else if (key == "pool") {
      cfg.pool = pool_variant_from_string(val);
    } else if (key == "blur_b") {
      std::istringstream bs(val);
      std::string tok;
      size_t i = 0;
      while (std::getline(bs, tok, ',')) {
        if (i >= cfg.blur_b.size())
          throw IoError("checkpoint: too many blur kernel entries");
        cfg.blur_b[i++] = std::stoll(tok);
      }
      if (i != cfg.blur_b.size())
        throw IoError("checkpoint: expected 5 blur kernel entries");
    } else if (key == "dropout") {
      cfg.dropout_rate = std::stod(val);
    } else if (key == "input_h") {
      cfg.input_h = std::stoll(val);
    } else if (key == "input_w") {
      cfg.input_w = std::stoll(val);
    } else if (key == "seed") {
      cfg.seed = std::stoull(val);
    } else if (key == "stages") {
      cfg.stages = std::stoll(val);
    } else {
      throw IoError("checkpoint: unknown config key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

void save_checkpoint(ModelF& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot write " + path);
  out.write(kMagic, 4);
  put_u16(out, kVersion);
  const std::string cfg_text = config_to_text(model.cfg);
  put_u32(out, static_cast<uint32_t>(cfg_text.size()));
  out.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));

  auto params = model.parameters();
  auto running = model.running_stats();
  put_u32(out, static_cast<uint32_t>(params.size() + running.size()));
  for (auto& [name, t] : params)
    put_blob(out, name, t.shape().dims, t.values());
  for (auto& [name, vec] : running)
    put_blob(out, name, {static_cast<int64_t>(vec->size())}, *vec);
  if (!out) throw IoError("checkpoint: write failed for " + path);
}

ModelF load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("checkpoint: bad magic in " + path);
  const uint16_t version = get_u16(in);
  if (version != kVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  const uint32_t cfg_len = get_u32(in);
  std::string cfg_text(cfg_len, '\0');
  if (!in.read(cfg_text.data(), cfg_len))
    throw IoError("checkpoint: truncated config in " + path);
  const ModelConfig cfg = config_from_text(cfg_text);
  ModelF model = build_elnet<float>(cfg);

  auto params = model.parameters();
  auto running = model.running_stats();
  const uint32_t blob_count = get_u32(in);
  if (blob_count != params.size() + running.size())
    throw IoError("checkpoint: blob count mismatch in " + path);
  for (uint32_t bi = 0; bi < blob_count; ++bi) {
    const uint32_t name_len = get_u32(in);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len))
      throw IoError("checkpoint: truncated blob name in " + path);
    const uint32_t ndims = get_u32(in);
    std::vector<int64_t> dims(ndims);
    size_t count = 1;
    for (uint32_t d = 0; d < ndims; ++d) {
      dims[d] = get_u32(in);
      count *= static_cast<size_t>(dims[d]);
    }
    std::vector<float> values = get_f32_values(in, count);

    bool matched = false;
    for (auto& [pname, t] : params) {
      if (pname != name) continue;
      if (t.shape().dims != dims)
        throw IoError("checkpoint: shape mismatch for " + name);
      t.values() = std::move(values);
      matched = true;
      break;
    }
    if (!matched) {
      for (auto& [rname, vec] : running) {
        if (rname != name) continue;
        if (vec->size() != count)
          throw IoError("checkpoint: size mismatch for " + name);
        *vec = std::move(values);
        matched = true;
        break;
      }
    }
    if (!matched) throw IoError("checkpoint: unexpected blob '" + name + "'");
  }
  return model;
}

}  // namespace elnet
