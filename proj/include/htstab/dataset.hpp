#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "htstab/error.hpp"
#include "htstab/linalg.hpp"

namespace htstab {

enum class ProblemKind : std::uint32_t { LogisticPair = 1, RobustRegression = 2, QuadPlusSine = 3 };

inline std::string_view to_string(ProblemKind k) {
  switch (k) {
    case ProblemKind::LogisticPair: return "logistic_pair";
    case ProblemKind::RobustRegression: return "robust_regression";
    case ProblemKind::QuadPlusSine: return "quad_plus_sine";
  }
  return "unknown";
}

inline std::optional<ProblemKind> parse_problem_kind(std::string_view s) {
  if (s == "logistic_pair") return ProblemKind::LogisticPair;
  if (s == "robust_regression") return ProblemKind::RobustRegression;
  if (s == "quad_plus_sine") return ProblemKind::QuadPlusSine;
  return std::nullopt;
}

namespace detail {

inline constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001B3ULL;

inline std::uint64_t fnv1a_word(std::uint64_t h, std::uint64_t word) {
  for (int b = 0; b < 8; ++b) {
    h ^= (word >> (8 * b)) & 0xFFU;
    h *= kFnvPrime;
  }
  return h;
}

}  // namespace detail

/// Ordered samples of a fixed record width, stored row-major.
/// Immutable; the content hash covers the family tag, shape and the bit
/// pattern of every value.
class Dataset {
 public:
  Dataset(ProblemKind kind, std::size_t width, std::vector<double> values)
      : kind_(kind), width_(width), values_(std::move(values)) {
    detail::require(width_ >= 1, "dataset: record width must be >= 1");
    detail::require(!values_.empty() && values_.size() % width_ == 0, "dataset: value count must be a positive multiple of the width");
    detail::require(all_finite(values_), "dataset: values must be finite");
    hash_ = compute_hash();
  }

  ProblemKind kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return values_.size() / width_; }
  std::size_t width() const noexcept { return width_; }
  std::uint64_t content_hash() const noexcept { return hash_; }
  std::span<const double> values() const noexcept { return values_; }

  std::span<const double> row(std::size_t i) const {
    if (i >= size()) throw invalid_argument("dataset: row index out of range");
    return std::span<const double>(values_).subspan(i * width_, width_);
  }

  Vector row_vector(std::size_t i) const {
    auto r = row(i);
    return Vector(r.begin(), r.end());
  }

  Dataset with_row_replaced(std::size_t i, std::span<const double> record) const {
    if (i >= size()) throw invalid_argument("dataset: row index out of range");
    detail::require(record.size() == width_, "dataset: replacement record has wrong width");
    std::vector<double> v = values_;
    std::copy(record.begin(), record.end(), v.begin() + static_cast<std::ptrdiff_t>(i * width_));
    return Dataset(kind_, width_, std::move(v));
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    if (a.kind_ != b.kind_ || a.width_ != b.width_ || a.values_.size() != b.values_.size()) return false;
    return std::memcmp(a.values_.data(), b.values_.data(), a.values_.size() * sizeof(double)) == 0;
  }

 private:
  std::uint64_t compute_hash() const {
    std::uint64_t h = detail::kFnvOffset;
    h = detail::fnv1a_word(h, static_cast<std::uint64_t>(kind_));
    h = detail::fnv1a_word(h, static_cast<std::uint64_t>(size()));
    h = detail::fnv1a_word(h, static_cast<std::uint64_t>(width_));
    for (double v : values_) h = detail::fnv1a_word(h, std::bit_cast<std::uint64_t>(v));
    return h;
  }

  ProblemKind kind_;
  std::size_t width_;
  std::vector<double> values_;
  std::uint64_t hash_ = 0;
};

// .htds container, all integers little-endian:
//   "HTDS" | u32 version | u32 family | u64 n | u64 width | n*width f64 | u64 hash
inline constexpr std::array<char, 4> kDatasetMagic{'H', 'T', 'D', 'S'};
inline constexpr std::uint32_t kDatasetVersion = 1;

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v, int bytes = 8) {
  for (int b = 0; b < bytes; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFU));
}

inline std::uint64_t get_u64(std::string_view in, std::size_t& pos, int bytes = 8) {
  if (pos + static_cast<std::size_t>(bytes) > in.size()) throw malformed_file("dataset file truncated");
  std::uint64_t v = 0;
  for (int b = 0; b < bytes; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + b])) << (8 * b);
  pos += static_cast<std::size_t>(bytes);
  return v;
}

}  // namespace detail

inline std::string encode_dataset(const Dataset& ds) {
  std::string out(kDatasetMagic.begin(), kDatasetMagic.end());
  detail::put_u64(out, kDatasetVersion, 4);
  detail::put_u64(out, static_cast<std::uint64_t>(ds.kind()), 4);
  detail::put_u64(out, ds.size());
  detail::put_u64(out, ds.width());
  for (double v : ds.values()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  detail::put_u64(out, ds.content_hash());
  return out;
}

inline Dataset decode_dataset(std::string_view bytes) {
  if (bytes.size() < 4 || !std::equal(kDatasetMagic.begin(), kDatasetMagic.end(), bytes.begin()))
    throw malformed_file("not a dataset file (bad magic)");
  std::size_t pos = 4;
  const auto version = detail::get_u64(bytes, pos, 4);
  if (version != kDatasetVersion) throw malformed_file("unsupported dataset version " + std::to_string(version));
  const auto family = detail::get_u64(bytes, pos, 4);
  if (family < 1 || family > 3) throw malformed_file("unknown family tag " + std::to_string(family));
  const auto n = detail::get_u64(bytes, pos);
  const auto width = detail::get_u64(bytes, pos);
  if (n == 0 || width == 0) throw malformed_file("empty dataset");
  const std::size_t remaining = bytes.size() - pos;
  if (n > remaining / 8 / width || remaining != n * width * 8 + 8) throw malformed_file("dataset file truncated or oversized");
  std::vector<double> values(n * width);
  for (auto& v : values) v = std::bit_cast<double>(detail::get_u64(bytes, pos));
  const auto stored_hash = detail::get_u64(bytes, pos);
  Dataset ds = [&] {
    try {
      return Dataset(static_cast<ProblemKind>(family), width, std::move(values));
    } catch (const invalid_argument& e) {
      throw malformed_file(std::string("invalid dataset payload: ") + e.what());
    }
  }();
  if (ds.content_hash() != stored_hash) throw hash_mismatch("dataset hash mismatch");
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_dataset(ds);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw io_error("write failed for " + path.string());
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) throw io_error("read failed for " + path.string());
  return decode_dataset(bytes);
}

}  // namespace htstab
