// Independent reference computations used by the test suites and selftest.
// Nothing in the library proper depends on this header.
#pragma once

#include "dyson/linalg.hpp"
#include "dyson/rng.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace dyson::oracle {

struct McEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};

// Sorted-uniform sampling of the unit simplex (volume 1/n!) for
// int (s_2-s_1)^{-a_1} ... (1-s_n)^{-a_n} ds.
inline McEstimate simplex_mc(const std::vector<double>& a, std::size_t samples, std::uint64_t seed) {
  const std::size_t n = a.size();
  Stream rng(seed, 0x5A17);
  std::vector<double> s(n);
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    for (auto& x : s) x = rng.uniform();
    std::sort(s.begin(), s.end());
    double v = 1.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double next = (j + 1 < n) ? s[j + 1] : 1.0;
      v *= std::pow(next - s[j], -a[j]);
    }
    sum += v;
    sum2 += v * v;
  }
  const double vol = 1.0 / std::tgamma(static_cast<double>(n) + 1.0);
  const double mean = sum / static_cast<double>(samples);
  const double var = std::max(0.0, sum2 / static_cast<double>(samples) - mean * mean);
  return {mean * vol, std::sqrt(var / static_cast<double>(samples)) * vol};
}

}  // namespace dyson::oracle
