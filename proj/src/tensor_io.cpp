#include "fastface/tensor_io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fastface/errors.hpp"

namespace fastface {
namespace {

constexpr char kMagic[4] = {'F', 'F', 'T', 'N'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::string_view in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return v;
}

[[noreturn]] void corrupt(std::size_t offset, const std::string& what) {
  throw IoError("corrupt tensor at byte offset " + std::to_string(offset) + ": " + what);
}

}  // namespace

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

Tensor make_tensor(std::vector<std::uint32_t> dims, std::span<const double> values) {
  Tensor t{std::move(dims), {}};
  if (t.element_count() != values.size()) {
    throw ConfigError("tensor dims describe " + std::to_string(t.element_count()) +
                      " values but " + std::to_string(values.size()) + " were given");
  }
  t.data.reserve(values.size());
  for (double v : values) t.data.push_back(static_cast<float>(v));
  return t;
}

Tensor to_tensor(const Matrix& m) {
  return make_tensor({static_cast<std::uint32_t>(m.rows), static_cast<std::uint32_t>(m.cols)},
                     m.data);
}

Tensor stack_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  std::vector<double> flat;
  for (const auto& r : rows) {
    if (r.size() != cols) throw ConfigError("stack_rows: rows differ in length");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return make_tensor({static_cast<std::uint32_t>(rows.size()), static_cast<std::uint32_t>(cols)},
                     flat);
}

Matrix tensor_to_matrix(const Tensor& t) {
  if (t.dims.size() != 2) throw ConfigError("expected a rank-2 tensor");
  return Matrix(t.dims[0], t.dims[1], std::vector<double>(t.data.begin(), t.data.end()));
}

std::string encode_tensor(const Tensor& t) {
  if (t.element_count() != t.data.size()) throw ConfigError("tensor payload size mismatch");
  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(kTensorVersion));
  put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) put_u32(out, d);
  out.reserve(out.size() + 4 * t.data.size());
  for (float f : t.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

Tensor decode_tensor(std::string_view bytes) {
  if (bytes.size() < 5) corrupt(bytes.size(), "truncated header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) corrupt(0, "bad magic, expected FFTN");
  if (static_cast<std::uint8_t>(bytes[4]) != kTensorVersion) {
    corrupt(4, "unsupported version " + std::to_string(static_cast<unsigned char>(bytes[4])));
  }
  std::size_t offset = 5;
  if (bytes.size() < offset + 4) corrupt(offset, "truncated rank");
  const std::uint32_t rank = get_u32(bytes, offset);
  offset += 4;
  if (bytes.size() < offset + 4ull * rank) corrupt(offset, "truncated dimension list");
  Tensor t;
  for (std::uint32_t i = 0; i < rank; ++i, offset += 4) t.dims.push_back(get_u32(bytes, offset));
  const std::size_t count = t.element_count();
  const std::size_t remaining = bytes.size() - offset;
  if (remaining < 4 * count) {
    corrupt(bytes.size(), "payload truncated, expected " + std::to_string(4 * count) +
                              " bytes, found " + std::to_string(remaining));
  }
  if (remaining > 4 * count) corrupt(offset + 4 * count, "trailing bytes after payload");
  t.data.resize(count);
  for (std::size_t i = 0; i < count; ++i, offset += 4) {
    t.data[i] = std::bit_cast<float>(get_u32(bytes, offset));
  }
  return t;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  write_file(path, encode_tensor(t));
}

Tensor read_tensor(const std::filesystem::path& path) {
  try {
    return decode_tensor(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::string git_blob_hash(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, content.data(), content.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xF]);
  }
  return hex;
}

}  // namespace fastface
