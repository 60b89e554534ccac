#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fastface/numerics.hpp"

namespace fastface {

// On-disk layout, all integers little-endian:
//   "FFTN" | version 0x01 | u32 rank | rank x u32 dims | float32 payload (row-major)
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const;
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline constexpr std::uint8_t kTensorVersion = 0x01;

Tensor make_tensor(std::vector<std::uint32_t> dims, std::span<const double> values);
Tensor to_tensor(const Matrix& m);
// Stacks equally sized rows into a rank-2 tensor.
Tensor stack_rows(const std::vector<std::vector<double>>& rows);
Matrix tensor_to_matrix(const Tensor& t);  // rank 2 only

std::string encode_tensor(const Tensor& t);
// Throws IoError with the byte offset of the first problem.
Tensor decode_tensor(std::string_view bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

// Git blob object id: sha1("blob <size>\0" + content), lowercase hex.
std::string git_blob_hash(std::string_view content);

}  // namespace fastface
