#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <json.hpp>

namespace mgdd {

using Index = Eigen::Index;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using F32Rows = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::uint32_t crc32_of(const void* data, std::size_t bytes);

/// Raw little-endian float32 blob, row-major.  Returns the crc32 of the bytes.
std::uint32_t write_f32(const std::filesystem::path& path, const F32Rows& values);

/// Reads a blob of exactly rows x cols floats and checks its crc32.
F32Rows read_f32(const std::filesystem::path& path, Index rows, Index cols,
                 std::uint32_t expected_crc);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Stable JSON text: sorted keys, two-space indent, trailing newline.
std::string dump_json(const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace mgdd
