#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace qrecm {

using Rng = std::mt19937_64;

// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of substream `index` under `master`; independent of evaluation order.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return mix64(mix64(master) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

/// Multinomial(K, p) counts by sequential conditional binomials.
template <typename Probs>
std::vector<std::size_t> multinomial_draw(Rng& rng, std::size_t k, const Probs& p) {
  const auto n = static_cast<std::size_t>(p.size());
  std::vector<std::size_t> counts(n, 0);
  std::size_t left = k;
  double mass = 1.0;
  for (std::size_t j = 0; j + 1 < n && left > 0; ++j) {
    const double pj = p[static_cast<decltype(p.size())>(j)];
    double q = mass > 0.0 ? pj / mass : 0.0;
    q = q < 0.0 ? 0.0 : (q > 1.0 ? 1.0 : q);
    std::binomial_distribution<std::size_t> bin(left, q);
    counts[j] = bin(rng);
    left -= counts[j];
    mass -= pj;
  }
  if (n > 0) counts[n - 1] += left;
  return counts;
}

}  // namespace qrecm
