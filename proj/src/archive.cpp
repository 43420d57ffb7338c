#include "mgdd/archive.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include <zlib.h>

namespace mgdd {

static_assert(std::endian::native == std::endian::little, "archives assume a little-endian host");

std::uint32_t crc32_of(const void* data, std::size_t bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* p = static_cast<const Bytef*>(data);
  while (bytes > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    bytes -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::uint32_t write_f32(const std::filesystem::path& path, const F32Rows& values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  const auto bytes = static_cast<std::size_t>(values.size()) * sizeof(float);
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(bytes));
  if (!out) throw FormatError("write failed for " + path.string());
  return crc32_of(values.data(), bytes);
}

F32Rows read_f32(const std::filesystem::path& path, Index rows, Index cols,
                 std::uint32_t expected_crc) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("cannot open " + path.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  const auto bytes = static_cast<std::size_t>(rows * cols) * sizeof(float);
  if (size != bytes)
    throw FormatError(path.string() + ": expected " + std::to_string(bytes) + " bytes, found " +
                      std::to_string(size) + " (truncated or corrupt)");
  in.seekg(0);
  F32Rows values(rows, cols);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw FormatError("read failed for " + path.string());
  if (crc32_of(values.data(), bytes) != expected_crc)
    throw FormatError(path.string() + ": checksum mismatch");
  return values;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("write failed for " + path.string());
}

std::string dump_json(const nlohmann::json& doc) { return doc.dump(2) + "\n"; }

nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace mgdd
