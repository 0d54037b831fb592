// Fixed-order reductions and a deterministic block-parallel runner.
#pragma once

#include <cstddef>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace dyson {

// Pairwise tree sum over [lo, hi); the tree depends only on the length.
template <class T>
T pairwise_sum(const std::vector<T>& xs, std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return xs[lo];
  const std::size_t mid = lo + (hi - lo) / 2;
  T left = pairwise_sum(xs, lo, mid);
  left += pairwise_sum(xs, mid, hi);
  return left;
}

template <class T>
T pairwise_sum(const std::vector<T>& xs) {
  return pairwise_sum(xs, 0, xs.size());
}

inline unsigned default_workers() {
  if (const char* env = std::getenv("DYSON_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

// Evaluates fn(block) for block = 0..blocks-1 on `workers` threads and
// returns the results indexed by block. Blocks are assigned statically, so
// each result is independent of the worker count.
template <class T, class Fn>
std::vector<T> run_blocks(std::size_t blocks, unsigned workers, Fn&& fn) {
  std::vector<T> out(blocks);
  if (workers <= 1 || blocks <= 1) {
    for (std::size_t b = 0; b < blocks; ++b) out[b] = fn(b);
    return out;
  }
  const unsigned nthreads = static_cast<unsigned>(std::min<std::size_t>(workers, blocks));
  std::vector<std::exception_ptr> errors(nthreads);
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (unsigned w = 0; w < nthreads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t b = w; b < blocks; b += nthreads) out[b] = fn(b);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace dyson
