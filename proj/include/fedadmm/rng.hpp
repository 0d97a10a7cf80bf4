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

#include <cstdint>
#include <random>

namespace fedadmm {

// Purpose tags for derived random streams. Each (tag, a, b) triple gets an
// independent generator, so consuming one stream never shifts another.
enum class Stream : std::uint64_t {
  Init = 1,
  Data = 2,
  Partition = 3,
  Sampling = 4,
  Epochs = 5,
  Batching = 6,
  Problem = 7,
};

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t root, Stream tag, std::uint64_t a = 0,
                                    std::uint64_t b = 0) noexcept {
  std::uint64_t h = mix64(root);
  h = mix64(h ^ static_cast<std::uint64_t>(tag));
  h = mix64(h ^ a);
  h = mix64(h ^ (b + 0x632be59bd9b4e019ULL));
  return h;
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t root, Stream tag, std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(derive_seed(root, tag, a, b));
}

}  // namespace fedadmm
