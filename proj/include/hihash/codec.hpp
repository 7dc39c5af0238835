// Copyright 2026 The hihash Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hihash/binary_io.hpp"
#include "hihash/error.hpp"
#include "hihash/hierarchy.hpp"
#include "hihash/linalg.hpp"

namespace hihash {

constexpr std::size_t words_for_bits(std::size_t bits) noexcept { return (bits + 63) / 64; }

/// L bits packed little-endian into 64-bit words: bit j of the code is bit
/// (j % 64) of word j / 64. A set bit means +1, a clear bit means -1. Tail bits
/// past L are always zero.
struct BinaryCode {
  std::vector<std::uint64_t> words;
  std::size_t bits = 0;

  bool bit(std::size_t j) const { return (words[j / 64] >> (j % 64)) & 1u; }

  bool operator==(const BinaryCode&) const = default;
};

inline BinaryCode binarize(const Eigen::Ref<const Vector>& r) {
  BinaryCode code;
  code.bits = static_cast<std::size_t>(r.size());
  code.words.assign(words_for_bits(code.bits), 0);
  for (std::size_t j = 0; j < code.bits; ++j) {
    if (r(static_cast<Eigen::Index>(j)) >= 0.0) code.words[j / 64] |= std::uint64_t{1} << (j % 64);
  }
  return code;
}

/// The +-1 vector a code stands for.
inline Vector unpack(const BinaryCode& code) {
  Vector v(static_cast<Eigen::Index>(code.bits));
  for (std::size_t j = 0; j < code.bits; ++j) v(static_cast<Eigen::Index>(j)) = code.bit(j) ? 1.0 : -1.0;
  return v;
}

inline std::size_t hamming_words(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) noexcept {
  std::size_t d = 0;
  for (std::size_t w = 0; w < a.size(); ++w) d += static_cast<std::size_t>(std::popcount(a[w] ^ b[w]));
  return d;
}

inline std::size_t hamming(const BinaryCode& a, const BinaryCode& b) {
  require(a.bits == b.bits, ErrorCode::LengthMismatch,
          "code lengths differ: " + std::to_string(a.bits) + " vs " + std::to_string(b.bits));
  return hamming_words(a.words, b.words);
}

/// For +-1 codes of length L, <a, b> = L - 2 d_H(a, b).
inline std::size_t hamming_from_inner(std::int64_t inner, std::size_t bits) {
  const auto L = static_cast<std::int64_t>(bits);
  require(inner >= -L && inner <= L, ErrorCode::ParityViolation, "inner product outside [-L, L]");
  require((L - inner) % 2 == 0, ErrorCode::ParityViolation, "L - inner product must be even");
  return static_cast<std::size_t>((L - inner) / 2);
}

struct Neighbor {
  std::uint64_t id = 0;
  std::size_t index = 0;  // position in the database
  std::size_t distance = 0;

  bool operator==(const Neighbor&) const = default;
};

/// Packed codes with their label paths and external item ids, stored
/// contiguously for linear scans.
class CodeDatabase {
 public:
  CodeDatabase() = default;
  explicit CodeDatabase(std::size_t bits) : bits_(bits), stride_(words_for_bits(bits)) {}

  std::size_t bits() const noexcept { return bits_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  std::size_t stride() const noexcept { return stride_; }

  void add(const BinaryCode& code, LabelPath path, std::uint64_t id) {
    require(code.bits == bits_, ErrorCode::LengthMismatch,
            "code has " + std::to_string(code.bits) + " bits, database expects " + std::to_string(bits_));
    require(paths_.empty() || path.size() == paths_.front().size(), ErrorCode::InvalidPath,
            "label path depth differs from the rest of the database");
    words_.insert(words_.end(), code.words.begin(), code.words.end());
    paths_.push_back(std::move(path));
    ids_.push_back(id);
  }

  std::span<const std::uint64_t> words(std::size_t i) const {
    return {words_.data() + i * stride_, stride_};
  }

  BinaryCode code(std::size_t i) const {
    auto w = words(i);
    return {{w.begin(), w.end()}, bits_};
  }

  const LabelPath& path(std::size_t i) const { return paths_.at(i); }
  const std::vector<LabelPath>& paths() const noexcept { return paths_; }
  std::uint64_t id(std::size_t i) const { return ids_.at(i); }
  const std::vector<std::uint64_t>& ids() const noexcept { return ids_; }
  std::size_t levels() const noexcept { return paths_.empty() ? 0 : paths_.front().size(); }

  std::optional<std::size_t> find_id(std::uint64_t id) const {
    auto it = std::find(ids_.begin(), ids_.end(), id);
    if (it == ids_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - ids_.begin());
  }

  bool operator==(const CodeDatabase&) const = default;

 private:
  std::size_t bits_ = 0;
  std::size_t stride_ = 0;
  std::vector<std::uint64_t> words_;
  std::vector<LabelPath> paths_;
  std::vector<std::uint64_t> ids_;
};

/// Exact linear-scan k nearest neighbours. Ties are broken by ascending item
/// id; k larger than the database yields the full ranking.
inline std::vector<Neighbor> knn(const CodeDatabase& db, const BinaryCode& query, std::size_t k) {
  require(!db.empty(), ErrorCode::EmptyDatabase, "database is empty");
  require(query.bits == db.bits(), ErrorCode::LengthMismatch,
          "query has " + std::to_string(query.bits) + " bits, database has " + std::to_string(db.bits()));
  std::vector<Neighbor> all(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) all[i] = {db.id(i), i, hamming_words(db.words(i), query.words)};
  const std::size_t keep = std::min(k, all.size());
  auto closer = [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), closer);
  all.resize(keep);
  return all;
}

// Database layout (little-endian):
//   "HIDB" | u32 version | u32 L | u64 count | u64 words[count * ceil(L/64)] |
//   u32 K | u32 paths[count * K] | u64 ids[count]
inline constexpr std::uint32_t kCodeDatabaseVersion = 1;

inline void write_database(io::BinaryWriter& w, const CodeDatabase& db) {
  w.magic("HIDB");
  w.u32(kCodeDatabaseVersion);
  w.u32(static_cast<std::uint32_t>(db.bits()));
  w.u64(db.size());
  for (std::size_t i = 0; i < db.size(); ++i)
    for (std::uint64_t word : db.words(i)) w.u64(word);
  w.u32(static_cast<std::uint32_t>(db.levels()));
  for (const auto& path : db.paths())
    for (ClassId c : path) w.u32(c);
  for (std::uint64_t id : db.ids()) w.u64(id);
}

inline CodeDatabase read_database(io::BinaryReader& r) {
  r.expect_magic("HIDB");
  const auto version = r.u32();
  require(version == kCodeDatabaseVersion, ErrorCode::BadFormat,
          r.source() + ": unsupported database version " + std::to_string(version));
  const std::size_t bits = r.u32();
  const std::size_t count = r.u64();
  require(bits > 0, ErrorCode::BadFormat, r.source() + ": zero code length");
  require(count < (std::size_t{1} << 40), ErrorCode::BadFormat, r.source() + ": implausible item count");
  const std::size_t stride = words_for_bits(bits);
  std::vector<BinaryCode> codes(count);
  for (auto& code : codes) {
    code.bits = bits;
    code.words.resize(stride);
    for (auto& word : code.words) word = r.u64();
    if (bits % 64 != 0) {
      require((code.words.back() >> (bits % 64)) == 0, ErrorCode::BadFormat,
              r.source() + ": non-zero tail bits in packed code");
    }
  }
  const std::size_t K = r.u32();
  std::vector<LabelPath> paths(count, LabelPath(K));
  for (auto& path : paths)
    for (auto& c : path) c = r.u32();
  CodeDatabase db(bits);
  for (std::size_t i = 0; i < count; ++i) db.add(codes[i], std::move(paths[i]), r.u64());
  return db;
}

inline void save_database(const CodeDatabase& db, const std::filesystem::path& path) {
  auto out = io::open_out(path);
  io::BinaryWriter w(out);
  write_database(w, db);
  w.check(path.string());
}

inline CodeDatabase load_database(const std::filesystem::path& path) {
  auto in = io::open_in(path);
  io::BinaryReader r(in, path.string());
  return read_database(r);
}

}  // namespace hihash
