#pragma once

// NPY v1.0 reader/writer for little-endian float32/float64 C-order arrays.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <regex>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "snapsci/error.hpp"
#include "snapsci/tensor.hpp"

namespace snapsci {

static_assert(std::endian::native == std::endian::little, "NPY I/O assumes a little-endian host");

// Writes `bytes` to `path` through a sibling temp file and a rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <class T>
std::string encode_npy(const Shape& shape, std::span<const T> data) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  if (shape_numel(shape) != data.size()) throw DimensionError("npy: shape/data size mismatch");
  std::string dict = "{'descr': '";
  dict += std::is_same_v<T, float> ? "<f4" : "<f8";
  dict += "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    dict += std::to_string(shape[i]);
    if (shape.size() == 1 || i + 1 < shape.size()) dict += ",";
    if (i + 1 < shape.size()) dict += " ";
  }
  dict += "), }";
  // magic(6) + version(2) + header_len(2) + dict + padding + '\n' is a multiple of 64.
  const std::size_t prefix = 10;
  std::size_t total = prefix + dict.size() + 1;
  const std::size_t padded = (total + 63) / 64 * 64;
  dict.append(padded - total, ' ');
  dict += '\n';
  const auto header_len = static_cast<std::uint16_t>(dict.size());

  std::string out("\x93NUMPY", 6);
  out += static_cast<char>(1);
  out += static_cast<char>(0);
  out += static_cast<char>(header_len & 0xff);
  out += static_cast<char>(header_len >> 8);
  out += dict;
  const std::size_t off = out.size();
  out.resize(off + data.size() * sizeof(T));
  if (!data.empty()) std::memcpy(out.data() + off, data.data(), data.size() * sizeof(T));
  return out;
}

template <class T>
void write_npy(const std::filesystem::path& path, const Shape& shape, std::span<const T> data) {
  write_file_atomic(path, encode_npy<T>(shape, data));
}

template <class T>
void write_npy(const std::filesystem::path& path, const Tensor<T>& t) {
  write_npy<T>(path, t.shape(), t.data());
}

// Decodes an NPY buffer, converting float32/float64 payloads to T.
template <class T>
Tensor<T> decode_npy(const std::string& bytes, const std::string& what = "npy") {
  if (bytes.size() < 10 || bytes.compare(0, 6, "\x93NUMPY") != 0) throw IoError(what + ": not an NPY file");
  const int major = static_cast<unsigned char>(bytes[6]);
  std::size_t header_len = 0, offset = 0;
  if (major == 1) {
    header_len = static_cast<unsigned char>(bytes[8]) | (static_cast<unsigned char>(bytes[9]) << 8);
    offset = 10;
  } else if (major == 2 || major == 3) {
    if (bytes.size() < 12) throw IoError(what + ": truncated header");
    for (int i = 0; i < 4; ++i) header_len |= static_cast<std::size_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
    offset = 12;
  } else {
    throw IoError(what + ": unsupported NPY version " + std::to_string(major));
  }
  if (bytes.size() < offset + header_len) throw IoError(what + ": truncated header");
  const std::string header = bytes.substr(offset, header_len);
  offset += header_len;

  std::smatch m;
  if (!std::regex_search(header, m, std::regex(R"('descr'\s*:\s*'([^']+)')"))) {
    throw IoError(what + ": missing descr");
  }
  const std::string descr = m[1];
  if (std::regex_search(header, m, std::regex(R"('fortran_order'\s*:\s*True)"))) {
    throw IoError(what + ": Fortran-order arrays are not supported");
  }
  if (!std::regex_search(header, m, std::regex(R"('shape'\s*:\s*\(([^)]*)\))"))) {
    throw IoError(what + ": missing shape");
  }
  Shape shape;
  {
    const std::string dims = m[1];
    std::regex num(R"(\d+)");
    for (auto it = std::sregex_iterator(dims.begin(), dims.end(), num); it != std::sregex_iterator(); ++it) {
      shape.push_back(std::stoull(it->str()));
    }
  }
  const std::size_t n = shape_numel(shape);
  std::vector<T> data(n);
  auto load = [&](auto tag) {
    using S = decltype(tag);
    if (bytes.size() < offset + n * sizeof(S)) throw IoError(what + ": truncated payload");
    std::vector<S> raw(n);
    if (n) std::memcpy(raw.data(), bytes.data() + offset, n * sizeof(S));
    for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<T>(raw[i]);
  };
  if (descr == "<f4" || descr == "f4") load(float{});
  else if (descr == "<f8" || descr == "f8") load(double{});
  else throw IoError(what + ": unsupported dtype " + descr);
  return Tensor<T>(std::move(shape), std::move(data));
}

template <class T>
Tensor<T> read_npy(const std::filesystem::path& path) {
  return decode_npy<T>(read_file(path), path.string());
}

}  // namespace snapsci
