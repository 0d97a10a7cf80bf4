/*
 * Copyright 2026 The fedadmm-sim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Dataset ingestion (IDX, CIFAR-10 binary, synthetic Gaussian mixtures) and
// the three client partition schemes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedadmm/error.hpp"
#include "fedadmm/model.hpp"
#include "fedadmm/rng.hpp"

namespace fedadmm {

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file", path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure", path);
  return bytes;
}

namespace detail {
inline std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  if (off + 4 > b.size()) throw ParseError(ParseError::Kind::Truncated, b.size(), "truncated IDX header");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}
}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Big-endian IDX image/label pair (MNIST, Fashion-MNIST). Pixels scaled to [0, 1].
inline Dataset parse_idx(const std::vector<std::uint8_t>& images, const std::vector<std::uint8_t>& labels,
                         std::string name = "idx") {
  if (detail::read_be32(images, 0) != kIdxImagesMagic)
    throw ParseError(ParseError::Kind::BadMagic, 0, "bad IDX image magic (expected 0x00000803)");
  if (detail::read_be32(labels, 0) != kIdxLabelsMagic)
    throw ParseError(ParseError::Kind::BadMagic, 0, "bad IDX label magic (expected 0x00000801)");
  const std::size_t n = detail::read_be32(images, 4);
  const std::size_t rows = detail::read_be32(images, 8);
  const std::size_t cols = detail::read_be32(images, 12);
  const std::size_t n_labels = detail::read_be32(labels, 4);
  if (n != n_labels)
    throw ParseError(ParseError::Kind::CountMismatch, 4,
                     "image count " + std::to_string(n) + " != label count " + std::to_string(n_labels));
  const std::size_t p = rows * cols;
  if (images.size() < 16 + n * p)
    throw ParseError(ParseError::Kind::Truncated, images.size(), "truncated IDX image payload");
  if (labels.size() < 8 + n) throw ParseError(ParseError::Kind::Truncated, labels.size(), "truncated IDX label payload");

  Dataset out;
  out.name = std::move(name);
  out.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  out.labels.resize(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* px = images.data() + 16 + i * p;
    for (std::size_t j = 0; j < p; ++j)
      out.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = px[j] / 255.0;
    out.labels[i] = labels[8 + i];
    max_label = std::max(max_label, out.labels[i]);
  }
  out.classes = max_label + 1;
  return out;
}

inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  return parse_idx(read_file(images_path), read_file(labels_path), images_path);
}

inline constexpr std::size_t kCifarRecord = 3073;

/// CIFAR-10 binary batches: records of 1 label byte + 3072 pixel bytes.
inline Dataset parse_cifar(const std::vector<std::vector<std::uint8_t>>& files, std::string name = "cifar10") {
  std::size_t n = 0;
  for (const auto& f : files) {
    if (f.size() % kCifarRecord != 0)
      throw ParseError(ParseError::Kind::BadLength, f.size() - f.size() % kCifarRecord,
                       "CIFAR file length " + std::to_string(f.size()) + " is not a multiple of 3073");
    n += f.size() / kCifarRecord;
  }
  Dataset out;
  out.name = std::move(name);
  out.classes = 10;
  out.features.resize(static_cast<Eigen::Index>(n), 3072);
  out.labels.resize(n);
  std::size_t row = 0;
  for (const auto& f : files) {
    for (std::size_t off = 0; off < f.size(); off += kCifarRecord, ++row) {
      if (f[off] > 9) throw ParseError(ParseError::Kind::Corrupt, off, "CIFAR label out of range");
      out.labels[row] = f[off];
      for (std::size_t j = 0; j < 3072; ++j)
        out.features(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) = f[off + 1 + j] / 255.0;
    }
  }
  return out;
}

inline Dataset load_cifar_bin(const std::vector<std::string>& paths) {
  std::vector<std::vector<std::uint8_t>> files;
  files.reserve(paths.size());
  for (const auto& p : paths) files.push_back(read_file(p));
  return parse_cifar(files, paths.empty() ? "cifar10" : paths.front());
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Unit-variance Gaussian clusters, one per class, whose means sit at
/// distance `separation` from the origin along random directions, shifted by
/// `offset` in every coordinate (a nonzero offset mimics un-centered inputs
/// such as raw pixel intensities). Samples are emitted class by class.
inline Dataset synth_mixture(int classes, int per_class, int dim, double separation, std::uint64_t seed,
                             double offset = 0.0) {
  if (classes < 2) throw ConfigError("synthetic mixture needs at least 2 classes");
  if (per_class < 1 || dim < 1) throw ConfigError("synthetic mixture needs per_class >= 1 and dim >= 1");
  Rng rng = make_rng(seed, Stream::Data);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd means(classes, dim);
  for (int k = 0; k < classes; ++k) {
    Eigen::VectorXd v(dim);
    for (int j = 0; j < dim; ++j) v[j] = normal(rng);
    means.row(k) = separation * v.normalized().transpose();
  }
  Dataset out;
  out.name = "synthetic";
  out.classes = classes;
  const auto n = static_cast<Eigen::Index>(classes) * per_class;
  out.features.resize(n, dim);
  out.labels.resize(static_cast<std::size_t>(n));
  Eigen::Index row = 0;
  for (int k = 0; k < classes; ++k) {
    for (int s = 0; s < per_class; ++s, ++row) {
      for (int j = 0; j < dim; ++j) out.features(row, j) = means(k, j) + normal(rng) + offset;
      out.labels[static_cast<std::size_t>(row)] = k;
    }
  }
  return out;
}

/// Random train/test split; `test_fraction` of the samples go to the test set.
inline std::pair<Dataset, Dataset> split_train_test(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0) || !(test_fraction < 1)) throw ConfigError("test fraction must lie in (0, 1)");
  Batch order = all_indices(data);
  Rng rng = make_rng(seed, Stream::Data, 1);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(data.size())));
  if (n_test == 0 || n_test >= data.size()) throw ConfigError("test split would leave an empty side");
  Batch test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  Batch train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {subset(data, train, data.name + "/train"), subset(data, test, data.name + "/test")};
}

// ---------------------------------------------------------------------------
// Partitions
// ---------------------------------------------------------------------------

enum class PartitionScheme { IID, Shards, Imbalanced };

inline std::string_view to_string(PartitionScheme s) {
  switch (s) {
    case PartitionScheme::IID: return "iid";
    case PartitionScheme::Shards: return "shards";
    case PartitionScheme::Imbalanced: return "imbalanced";
  }
  return "unknown";
}

inline PartitionScheme parse_partition_scheme(std::string_view name) {
  for (auto s : {PartitionScheme::IID, PartitionScheme::Shards, PartitionScheme::Imbalanced})
    if (to_string(s) == name) return s;
  throw ConfigError("unknown partition scheme '" + std::string(name) + "' (expected iid|shards|imbalanced)");
}

struct PartitionStats {
  double mean = 0;
  double stdev = 0;  // sample standard deviation (n - 1 denominator)
  std::size_t min = 0;
  std::size_t max = 0;
};

struct Partition {
  std::vector<Batch> assignments;  // client id -> sorted sample indices
  PartitionScheme scheme = PartitionScheme::IID;
  PartitionStats stats;

  std::size_t clients() const noexcept { return assignments.size(); }
};

inline PartitionStats compute_stats(const std::vector<Batch>& assignments) {
  PartitionStats s;
  if (assignments.empty()) return s;
  s.min = assignments.front().size();
  double sum = 0;
  for (const auto& a : assignments) {
    sum += static_cast<double>(a.size());
    s.min = std::min(s.min, a.size());
    s.max = std::max(s.max, a.size());
  }
  const double m = static_cast<double>(assignments.size());
  s.mean = sum / m;
  if (assignments.size() > 1) {
    double sq = 0;
    for (const auto& a : assignments) sq += (static_cast<double>(a.size()) - s.mean) * (static_cast<double>(a.size()) - s.mean);
    s.stdev = std::sqrt(sq / (m - 1));
  }
  return s;
}

namespace detail {

inline Partition finish(std::vector<Batch> assignments, PartitionScheme scheme) {
  for (auto& a : assignments) std::sort(a.begin(), a.end());
  Partition p;
  p.stats = compute_stats(assignments);
  p.assignments = std::move(assignments);
  p.scheme = scheme;
  return p;
}

// Stable sort of sample indices by label, cut into `count` contiguous shards;
// the last shard absorbs the remainder.
inline std::vector<Batch> label_shards(const std::vector<int>& labels, std::size_t count) {
  Batch order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
  const std::size_t size = labels.size() / count;
  std::vector<Batch> shards(count);
  for (std::size_t s = 0; s < count; ++s) {
    const auto begin = order.begin() + static_cast<std::ptrdiff_t>(s * size);
    const auto end = s + 1 == count ? order.end() : begin + static_cast<std::ptrdiff_t>(size);
    shards[s].assign(begin, end);
  }
  return shards;
}

}  // namespace detail

/// Random permutation split into m parts whose sizes differ by at most one.
inline Partition partition_iid(std::size_t n, std::size_t m, std::uint64_t seed) {
  if (m < 1) throw ConfigError("partition needs at least one client");
  if (n < m) throw ConfigError("iid partition: n = " + std::to_string(n) + " < m = " + std::to_string(m));
  Batch order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, Stream::Partition);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> parts(m);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t size = n / m + (i < n % m ? 1 : 0);
    parts[i].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                    order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return detail::finish(std::move(parts), PartitionScheme::IID);
}

/// Label-sorted data cut into m * shards_per_client shards; each client draws
/// shards_per_client of them uniformly without replacement.
inline Partition partition_shards(const std::vector<int>& labels, std::size_t m, std::size_t shards_per_client,
                                  std::uint64_t seed) {
  if (m < 1 || shards_per_client < 1) throw ConfigError("shard partition needs m >= 1 and shards_per_client >= 1");
  const std::size_t count = m * shards_per_client;
  if (labels.size() < count)
    throw ConfigError("shard partition: n = " + std::to_string(labels.size()) + " < m * shards_per_client = " +
                      std::to_string(count));
  auto shards = detail::label_shards(labels, count);
  Batch order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, Stream::Partition);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> parts(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < shards_per_client; ++k) {
      const auto& shard = shards[order[i * shards_per_client + k]];
      parts[i].insert(parts[i].end(), shard.begin(), shard.end());
    }
  return detail::finish(std::move(parts), PartitionScheme::Shards);
}

/// Imbalanced volumes: label-sorted data cut into `total_shards` shards; the m
/// clients form m/2 pairs, each member of pair k (1-based, k < m/2) receives k
/// shards, and the last pair splits whatever remains.
inline Partition partition_imbalanced(const std::vector<int>& labels, std::size_t m, std::size_t total_shards,
                                      std::uint64_t seed) {
  if (m < 2 || m % 2 != 0) throw ConfigError("imbalanced partition needs an even number of clients");
  if (total_shards < 1 || labels.size() < total_shards)
    throw ConfigError("imbalanced partition: need 1 <= total_shards <= n");
  const std::size_t groups = m / 2;
  const std::size_t dealt = groups * (groups - 1);  // 2 * sum_{k=1}^{groups-1} k
  if (total_shards < dealt + 2)
    throw ConfigError("imbalanced partition: " + std::to_string(total_shards) + " shards cannot cover " +
                      std::to_string(dealt + 2) + " required by " + std::to_string(m) + " clients");
  auto shards = detail::label_shards(labels, total_shards);
  Batch order(total_shards);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, Stream::Partition);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Batch> parts(m);
  std::size_t next = 0;
  auto deal = [&](std::size_t client, std::size_t count) {
    for (std::size_t k = 0; k < count; ++k) {
      const auto& shard = shards[order[next++]];
      parts[client].insert(parts[client].end(), shard.begin(), shard.end());
    }
  };
  for (std::size_t g = 1; g < groups; ++g) {
    deal(2 * (g - 1), g);
    deal(2 * (g - 1) + 1, g);
  }
  const std::size_t rest = total_shards - dealt;
  deal(m - 2, rest - rest / 2);
  deal(m - 1, rest / 2);
  return detail::finish(std::move(parts), PartitionScheme::Imbalanced);
}

/// Disjoint and covering exactly [0, n) with no empty client.
inline bool is_valid_partition(const Partition& p, std::size_t n) {
  std::vector<char> seen(n, 0);
  std::size_t total = 0;
  for (const auto& a : p.assignments) {
    if (a.empty()) return false;
    for (auto i : a) {
      if (i >= n || seen[i]) return false;
      seen[i] = 1;
      ++total;
    }
  }
  return total == n;
}

}  // namespace fedadmm
