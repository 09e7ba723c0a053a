#include "elnet/volume.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "elnet/errors.hpp"

namespace elnet {

namespace {

constexpr char kMagic[6] = {'\x93', 'N', 'U', 'M', 'P', 'Y'};

std::string header_value(const std::string& header, const std::string& key) {
  const std::string quoted = "'" + key + "'";
  size_t pos = header.find(quoted);
  if (pos == std::string::npos)
    throw IoError("npy: header missing key " + key);
  pos = header.find(':', pos);
  if (pos == std::string::npos) throw IoError("npy: malformed header");
  ++pos;
  while (pos < header.size() && header[pos] == ' ') ++pos;
  size_t end = pos;
  if (header[pos] == '(') {
    end = header.find(')', pos);
    if (end == std::string::npos) throw IoError("npy: malformed shape");
    ++end;
  } else {
    while (end < header.size() && header[end] != ',' && header[end] != '}')
      ++end;
  }
  return header.substr(pos, end - pos);
}

std::vector<int64_t> parse_shape(const std::string& text) {
  std::vector<int64_t> dims;
  std::string cur;
  for (char c : text) {
    if (c >= '0' && c <= '9') {
      cur += c;
    } else if (!cur.empty()) {
      dims.push_back(std::stoll(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) dims.push_back(std::stoll(cur));
  return dims;
}

std::string strip_quotes(std::string s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == ',')) s.pop_back();
  if (s.size() >= 2 && s.front() == '\'' && s.back() == '\'')
    return s.substr(1, s.size() - 2);
  return s;
}

}  // namespace

NpyArray read_npy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("npy: cannot open " + path);

  char magic[6];
  if (!in.read(magic, 6) || std::memcmp(magic, kMagic, 6) != 0)
    throw IoError("npy: bad magic in " + path);
  unsigned char ver[2];
  if (!in.read(reinterpret_cast<char*>(ver), 2))
    throw IoError("npy: truncated version in " + path);
  if (ver[0] != 1 || ver[1] != 0)
    throw IoError("npy: unsupported header version " + std::to_string(ver[0]) +
                  "." + std::to_string(ver[1]) + " in " + path);
  unsigned char hlen_raw[2];
  if (!in.read(reinterpret_cast<char*>(hlen_raw), 2))
    throw IoError("npy: truncated header length in " + path);
  const size_t hlen = static_cast<size_t>(hlen_raw[0]) |
                      (static_cast<size_t>(hlen_raw[1]) << 8);
  std::string header(hlen, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(hlen)))
    throw IoError("npy: truncated header in " + path);

  const std::string descr = strip_quotes(header_value(header, "descr"));
  const std::string fortran = header_value(header, "fortran_order");
  if (fortran.find("True") != std::string::npos)
    throw IoError("npy: fortran-order payloads are not supported (" + path + ")");
  NpyArray arr;
  arr.shape = parse_shape(header_value(header, "shape"));
  int64_t count = 1;
  for (int64_t d : arr.shape) {
    if (d < 1) throw IoError("npy: non-positive dim in " + path);
    count *= d;
  }

  size_t elem_size;
  enum { U8, I16, F32, F64 } kind;
  if (descr == "|u1" || descr == "<u1") {
    kind = U8; elem_size = 1;
  } else if (descr == "<i2") {
    kind = I16; elem_size = 2;
  } else if (descr == "<f4") {
    kind = F32; elem_size = 4;
  } else if (descr == "<f8") {
    kind = F64; elem_size = 8;
  } else {
    throw IoError("npy: unsupported dtype '" + descr + "' in " + path);
  }

  std::vector<unsigned char> raw(static_cast<size_t>(count) * elem_size);
  if (!in.read(reinterpret_cast<char*>(raw.data()),
               static_cast<std::streamsize>(raw.size())))
    throw IoError("npy: truncated payload in " + path);

  arr.data.resize(static_cast<size_t>(count));
  const unsigned char* p = raw.data();
  for (int64_t i = 0; i < count; ++i, p += elem_size) {
    switch (kind) {
      case U8:
        arr.data[static_cast<size_t>(i)] = static_cast<float>(*p);
        break;
      case I16: {
        const uint16_t u = static_cast<uint16_t>(p[0]) |
                           (static_cast<uint16_t>(p[1]) << 8);
        arr.data[static_cast<size_t>(i)] = static_cast<float>(static_cast<int16_t>(u));
        break;
      }
      case F32: {
        uint32_t u = 0;
        for (int b = 0; b < 4; ++b) u |= static_cast<uint32_t>(p[b]) << (8 * b);
        float f;
        std::memcpy(&f, &u, 4);
        arr.data[static_cast<size_t>(i)] = f;
        break;
      }
      case F64: {
        uint64_t u = 0;
        for (int b = 0; b < 8; ++b) u |= static_cast<uint64_t>(p[b]) << (8 * b);
        double d;
        std::memcpy(&d, &u, 8);
        arr.data[static_cast<size_t>(i)] = static_cast<float>(d);
        break;
      }
    }
  }
  return arr;
}

void write_npy_f32(const std::string& path, const std::vector<int64_t>& shape,
                   const std::vector<float>& data) {
  std::string shape_txt = "(";
  for (size_t i = 0; i < shape.size(); ++i)
    shape_txt += std::to_string(shape[i]) + ", ";
  shape_txt += ")";
  std::string dict = "{'descr': '<f4', 'fortran_order': False, 'shape': " +
                     shape_txt + ", }";
  // pad so magic(6) + version(2) + hlen(2) + header is a multiple of 64
  size_t total = 10 + dict.size() + 1;
  const size_t padded = (total + 63) / 64 * 64;
  dict.append(padded - total, ' ');
  dict += '\n';

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("npy: cannot write " + path);
  out.write(kMagic, 6);
  const unsigned char ver[2] = {1, 0};
  out.write(reinterpret_cast<const char*>(ver), 2);
  const size_t hlen = dict.size();
  const unsigned char hlen_raw[2] = {static_cast<unsigned char>(hlen & 0xff),
                                     static_cast<unsigned char>((hlen >> 8) & 0xff)};
  out.write(reinterpret_cast<const char*>(hlen_raw), 2);
  out.write(dict.data(), static_cast<std::streamsize>(dict.size()));

  std::vector<unsigned char> raw(data.size() * 4);
  for (size_t i = 0; i < data.size(); ++i) {
    uint32_t u;
    std::memcpy(&u, &data[i], 4);
    for (int b = 0; b < 4; ++b)
      raw[i * 4 + static_cast<size_t>(b)] = static_cast<unsigned char>((u >> (8 * b)) & 0xff);
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("npy: write failed for " + path);
}

Volume read_volume(const std::string& path) {
  NpyArray arr = read_npy(path);
  if (arr.shape.size() != 3)
    throw IoError("volume: expected rank 3, got rank " +
                  std::to_string(arr.shape.size()) + " in " + path);
  Volume v;
  v.s = arr.shape[0];
  v.h = arr.shape[1];
  v.w = arr.shape[2];
  v.data = std::move(arr.data);
  for (float x : v.data)
    if (!std::isfinite(x)) throw IoError("volume: non-finite intensity in " + path);
  v.exam_id = std::filesystem::path(path).stem().string();
  return v;
}

void write_volume(const std::string& path, const Volume& v) {
  write_npy_f32(path, {v.s, v.h, v.w}, v.data);
}

}  // namespace elnet
