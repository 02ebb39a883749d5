#pragma once

// Model bundle: the seven per-category networks plus training metadata in one
// binary file.  All integers and floats are little-endian.
//
//   "BDCI"                      4 bytes magic
//   u32 version                 currently 1
//   u32 metadata length, bytes  UTF-8 JSON
//   u32 model count
//   per model:
//     u32 category index
//     u32 number of layer widths, then that many u32 widths
//     f64 parameters, per layer: W (out x in, row-major) then b (out)
//   32 bytes SHA-256 of everything above

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bdci/digest.hpp"
#include "bdci/error.hpp"
#include "bdci/nn.hpp"
#include "bdci/segments.hpp"

namespace bdci {

static_assert(std::endian::native == std::endian::little,
              "bundle I/O assumes a little-endian host");

inline constexpr std::uint32_t kBundleVersion = 1;
inline constexpr char kBundleMagic[4] = {'B', 'D', 'C', 'I'};

class ModelBundle {
 public:
  ModelBundle() = default;
  ModelBundle(std::map<SegmentCategory, nn::MLP> models, nlohmann::json metadata)
      : models_(std::move(models)), metadata_(std::move(metadata)) {}

  bool has(SegmentCategory c) const { return models_.count(c) != 0; }
  const nn::MLP& model(SegmentCategory c) const {
    auto it = models_.find(c);
    if (it == models_.end()) {
      fail(ErrorCode::MissingCategory, "no model for " + std::string(to_string(c)));
    }
    return it->second;
  }
  const std::map<SegmentCategory, nn::MLP>& models() const noexcept { return models_; }
  const nlohmann::json& metadata() const noexcept { return metadata_; }
  bool complete() const { return models_.size() == kNumCategories; }

  /// Clamp applied to the log-sigma head; recorded at training time.
  nn::LogSigmaClamp clamp() const {
    nn::LogSigmaClamp c = nn::kDefaultClamp;
    if (metadata_.contains("config")) {
      const auto& cfg = metadata_["config"];
      c.lo = cfg.value("log_sigma_lo", c.lo);
      c.hi = cfg.value("log_sigma_hi", c.hi);
    }
    return c;
  }

 private:
  std::map<SegmentCategory, nn::MLP> models_;
  nlohmann::json metadata_;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : b_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) fail(ErrorCode::ChecksumMismatch, "bundle payload is truncated");
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Serialises whatever models are present; load_bundle enforces completeness.
inline std::vector<std::uint8_t> save_bundle(const std::map<SegmentCategory, nn::MLP>& models,
                                             const nlohmann::json& metadata) {
  std::vector<std::uint8_t> out(std::begin(kBundleMagic), std::end(kBundleMagic));
  detail::put_u32(out, kBundleVersion);
  const std::string meta = metadata.dump();
  detail::put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  detail::put_u32(out, static_cast<std::uint32_t>(models.size()));
  for (const auto& [cat, mlp] : models) {
    detail::put_u32(out, static_cast<std::uint32_t>(index_of(cat)));
    detail::put_u32(out, static_cast<std::uint32_t>(mlp.layer_dims().size()));
    for (int d : mlp.layer_dims()) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (double p : mlp.parameters()) detail::put_f64(out, p);
  }
  const Sha256 digest = sha256(out);
  out.insert(out.end(), digest.begin(), digest.end());
  return out;
}

inline std::vector<std::uint8_t> save_bundle(const ModelBundle& bundle) {
  return save_bundle(bundle.models(), bundle.metadata());
}

inline ModelBundle load_bundle(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kBundleMagic, 4) != 0) {
    fail(ErrorCode::BadMagic, "not a BDCI model bundle");
  }
  if (bytes.size() < 4 + 32) fail(ErrorCode::ChecksumMismatch, "bundle is truncated");
  const auto payload = bytes.first(bytes.size() - 32);
  const Sha256 digest = sha256(payload);
  if (std::memcmp(digest.data(), bytes.data() + payload.size(), 32) != 0) {
    fail(ErrorCode::ChecksumMismatch, "bundle checksum does not match its contents");
  }

  detail::Reader r(payload.subspan(4));
  const std::uint32_t version = r.u32();
  if (version != kBundleVersion) {
    fail(ErrorCode::VersionUnsupported, "bundle version " + std::to_string(version));
  }
  const std::uint32_t meta_len = r.u32();
  nlohmann::json meta = nlohmann::json::parse(r.bytes(meta_len), nullptr, false);
  if (meta.is_discarded()) fail(ErrorCode::ChecksumMismatch, "bundle metadata is not JSON");

  std::map<SegmentCategory, nn::MLP> models;
  const std::uint32_t count = r.u32();
  for (std::uint32_t m = 0; m < count; ++m) {
    const std::uint32_t cat_index = r.u32();
    if (cat_index >= kNumCategories) fail(ErrorCode::ChecksumMismatch, "unknown category index");
    const std::uint32_t n_dims = r.u32();
    if (n_dims < 2 || n_dims > 64) fail(ErrorCode::ChecksumMismatch, "implausible layer count");
    std::vector<int> dims(n_dims);
    for (auto& d : dims) d = static_cast<int>(r.u32());
    nn::MLP mlp(dims);
    const SegmentCategory cat = category_from_index(cat_index);
    if (mlp.input_dim() != input_width(cat)) {
      fail(ErrorCode::DimensionMismatch, std::string(to_string(cat)) + " model has input width " +
                                             std::to_string(mlp.input_dim()));
    }
    for (double& p : mlp.parameters()) p = r.f64();
    models.emplace(cat, std::move(mlp));
  }
  if (!r.done()) fail(ErrorCode::ChecksumMismatch, "trailing bytes after the last model");
  for (SegmentCategory c : kAllCategories) {
    if (!models.count(c)) {
      fail(ErrorCode::MissingCategory, "bundle lacks a model for " + std::string(to_string(c)));
    }
  }
  return ModelBundle(std::move(models), std::move(meta));
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::Io, "short write to " + path);
}

inline ModelBundle load_bundle_file(const std::string& path) {
  return load_bundle(read_file_bytes(path));
}

}  // namespace bdci
