// Copyright 2026 The XSpan Authors
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

#ifndef XSPAN_NUMERICS_RNG_H_
#define XSPAN_NUMERICS_RNG_H_

#include <cstdint>
#include <random>

namespace xspan::numerics {

// Deterministic random source used everywhere in the project.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. Distributions are implemented here rather than taken from
// <random> because the standard distributions are allowed to differ between
// library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  // Seed for the `index`-th independent substream of `seed`.
  static uint64_t derive(uint64_t seed, uint64_t index);

  uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [lo, hi], inclusive, without modulo bias.
  int64_t uniform_int(int64_t lo, int64_t hi);
  // Standard normal via Box-Muller (one draw per call).
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace xspan::numerics

#endif  // XSPAN_NUMERICS_RNG_H_
