#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vlaudit/datamodel.hpp"
#include "vlaudit/error.hpp"

namespace vlaudit {

static_assert(std::numeric_limits<float>::is_iec559, "EMBV1 stores IEEE-754 binary32 payloads");

/// Row-major count x dim matrix with one id per row. Values are held in
/// double; files store binary32.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;

  EmbeddingSet(std::size_t dim, std::vector<double> data, std::vector<std::string> ids, bool normalized = false)
      : dim_(dim), data_(std::move(data)), ids_(std::move(ids)), normalized_(normalized) {
    if (dim_ == 0) throw Error(ErrorCode::InvalidArgument, "embedding dim must be positive");
    if (data_.size() != dim_ * ids_.size())
      throw Error(ErrorCode::SizeMismatch, "payload has " + std::to_string(data_.size()) + " values, expected " +
                                               std::to_string(dim_ * ids_.size()));
    for (std::size_t i = 0; i < ids_.size(); ++i)
      for (std::size_t j = 0; j < dim_; ++j)
        if (!std::isfinite(data_[i * dim_ + j]))
          throw Error(ErrorCode::NonFinitePayload, "row " + std::to_string(i) + " (id=" + ids_[i] + ")");
  }

  std::size_t count() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  bool normalized() const noexcept { return normalized_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::vector<double>& data() const noexcept { return data_; }

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  /// Copy with every row scaled to unit L2 norm. Zero rows are rejected.
  EmbeddingSet normalize() const {
    std::vector<double> out(data_.size());
    for (std::size_t i = 0; i < count(); ++i) {
      const auto r = row(i);
      double sq = 0.0;
      for (double x : r) sq += x * x;
      const double norm = std::sqrt(sq);
      if (norm == 0.0) throw Error(ErrorCode::ZeroVector, "row " + std::to_string(i) + " (id=" + ids_[i] + ")");
      for (std::size_t j = 0; j < dim_; ++j) out[i * dim_ + j] = r[j] / norm;
    }
    EmbeddingSet result;
    result.dim_ = dim_;
    result.data_ = std::move(out);
    result.ids_ = ids_;
    result.normalized_ = true;
    return result;
  }

  /// Rows picked by index, in the given order.
  EmbeddingSet select(std::span<const std::size_t> rows) const {
    EmbeddingSet result;
    result.dim_ = dim_;
    result.normalized_ = normalized_;
    result.data_.reserve(rows.size() * dim_);
    for (auto r : rows) {
      const auto src = row(r);
      result.data_.insert(result.data_.end(), src.begin(), src.end());
      result.ids_.push_back(ids_[r]);
    }
    return result;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
  std::vector<std::string> ids_;
  bool normalized_ = false;
};

inline constexpr char kEmbMagic[6] = {'E', 'M', 'B', 'V', '1', '\0'};
inline constexpr std::uint8_t kFlagNormalized = 0x01;
inline constexpr std::uint8_t kDtypeFloat32 = 1;

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out += static_cast<char>(v & 0xff);
  out += static_cast<char>((v >> 8) & 0xff);
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out += static_cast<char>((v >> s) & 0xff);
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  bool has(std::size_t n) const { return bytes_.size() - pos_ >= n; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint8_t u8() { return static_cast<std::uint8_t>(bytes_[pos_++]); }

  std::uint16_t u16() {
    std::uint16_t v = static_cast<std::uint8_t>(bytes_[pos_]) |
                      static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes_[pos_ + 1]) << 8);
    pos_ += 2;
    return v;
  }

  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_ + k])) << (8 * k);
    pos_ += 4;
    return v;
  }

  std::string_view take(std::size_t n) {
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Encodes to EMBV1: magic, flags, dtype, u32 count, u32 dim, LE binary32
/// payload, then u16-length-prefixed UTF-8 ids.
inline std::string encode_embeddings(const EmbeddingSet& e) {
  if (e.count() > UINT32_MAX || e.dim() > UINT32_MAX) throw Error(ErrorCode::InvalidArgument, "set too large for EMBV1");
  std::string out(kEmbMagic, sizeof kEmbMagic);
  out += static_cast<char>(e.normalized() ? kFlagNormalized : 0);
  out += static_cast<char>(kDtypeFloat32);
  detail::put_u32(out, static_cast<std::uint32_t>(e.count()));
  detail::put_u32(out, static_cast<std::uint32_t>(e.dim()));
  out.reserve(out.size() + e.data().size() * 4);
  for (double v : e.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  for (const auto& id : e.ids()) {
    if (id.size() > UINT16_MAX) throw Error(ErrorCode::InvalidArgument, "id longer than 65535 bytes");
    detail::put_u16(out, static_cast<std::uint16_t>(id.size()));
    out += id;
  }
  return out;
}

inline EmbeddingSet decode_embeddings(std::string_view bytes) {
  detail::ByteReader in(bytes);
  if (!in.has(sizeof kEmbMagic) || std::memcmp(in.take(sizeof kEmbMagic).data(), kEmbMagic, sizeof kEmbMagic) != 0)
    throw Error(ErrorCode::BadMagic, "expected EMBV1");
  if (!in.has(10)) throw Error(ErrorCode::TruncatedPayload, "header");
  const std::uint8_t flags = in.u8();
  const std::uint8_t dtype = in.u8();
  if (dtype != kDtypeFloat32) throw Error(ErrorCode::UnsupportedDtype, std::to_string(dtype));
  const std::uint32_t count = in.u32();
  const std::uint32_t dim = in.u32();
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "dim is zero");
  const std::uint64_t values = static_cast<std::uint64_t>(count) * dim;
  if (in.remaining() / 4 < values)
    throw Error(ErrorCode::TruncatedPayload, "payload needs " + std::to_string(values * 4) + " bytes, " +
                                                 std::to_string(in.remaining()) + " available");
  std::vector<double> data(values);
  std::vector<std::size_t> bad_rows;
  for (std::uint64_t k = 0; k < values; ++k) {
    const float f = std::bit_cast<float>(in.u32());
    if (!std::isfinite(f) && (bad_rows.empty() || bad_rows.back() != k / dim)) bad_rows.push_back(k / dim);
    data[k] = f;
  }
  if (!bad_rows.empty()) {
    std::string rows;
    for (std::size_t i = 0; i < bad_rows.size() && i < 10; ++i) rows += (i ? "," : "") + std::to_string(bad_rows[i]);
    if (bad_rows.size() > 10) rows += ",...";
    throw Error(ErrorCode::NonFinitePayload, "rows " + rows);
  }
  std::vector<std::string> ids;
  ids.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    if (!in.has(2)) throw Error(ErrorCode::TruncatedPayload, "id " + std::to_string(i) + " length");
    const auto len = in.u16();
    if (!in.has(len)) throw Error(ErrorCode::TruncatedPayload, "id " + std::to_string(i) + " bytes");
    ids.emplace_back(in.take(len));
  }
  if (in.remaining() != 0) throw Error(ErrorCode::TrailingBytes, std::to_string(in.remaining()) + " bytes");
  return EmbeddingSet(dim, std::move(data), std::move(ids), (flags & kFlagNormalized) != 0);
}

inline EmbeddingSet read_embeddings(const std::filesystem::path& path) {
  try {
    return decode_embeddings(read_text_file(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
}

inline void write_embeddings(const std::filesystem::path& path, const EmbeddingSet& e) {
  const auto bytes = encode_embeddings(e);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

struct IdMismatch {
  std::size_t index;
  std::string expected;  // manifest id
  std::string got;       // embedding id
};

struct AlignmentReport {
  bool ok = true;
  std::optional<std::pair<std::size_t, std::size_t>> count_mismatch;  // (expected, got)
  std::vector<IdMismatch> mismatches;                                 // first 10
  std::size_t total_mismatches = 0;

  std::string summary() const {
    if (ok) return "OK";
    std::ostringstream ss;
    if (count_mismatch) ss << "CountMismatch(" << count_mismatch->first << ", " << count_mismatch->second << ") ";
    ss << total_mismatches << " id mismatch(es)";
    for (const auto& m : mismatches) ss << "; [" << m.index << "] expected '" << m.expected << "' got '" << m.got << "'";
    return ss.str();
  }
};

inline AlignmentReport validate_alignment(const EmbeddingSet& e, const DatasetManifest& m) {
  AlignmentReport report;
  if (e.count() != m.size()) {
    report.ok = false;
    report.count_mismatch = std::make_pair(m.size(), e.count());
  }
  const std::size_t common = std::min(e.count(), m.size());
  for (std::size_t i = 0; i < common; ++i) {
    if (e.ids()[i] == m[i].id) continue;
    report.ok = false;
    ++report.total_mismatches;
    if (report.mismatches.size() < 10) report.mismatches.push_back({i, m[i].id, e.ids()[i]});
  }
  return report;
}

}  // namespace vlaudit
