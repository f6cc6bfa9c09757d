#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "qdetect/random.hpp"

namespace qdetect {

/// Execution options shared by every Monte Carlo estimator.
struct EngineOptions {
  unsigned workers = 1;
  std::uint64_t max_steps = 10'000'000;
  /// Replications per work unit. Part of the reduction order, so changing it
  /// changes the last bits of reported sums; the worker count does not.
  std::uint64_t chunk = 1u << 14;
};

/// Runs `reps` replications; replication i receives derive_stream(seed, i).
/// Each fixed-size chunk is folded into its own accumulator and the chunk
/// accumulators are merged in index order, so the result is independent of
/// how chunks were scheduled across workers.
///
/// `body(Rng&, std::uint64_t index, Acc&)` must only touch its accumulator.
/// Acc needs a default constructor and `merge(const Acc&)`.
template <typename Acc, typename Body>
Acc run_replications(std::uint64_t reps, std::uint64_t seed, const EngineOptions& opts, Body&& body) {
  const std::uint64_t chunk = std::max<std::uint64_t>(opts.chunk, 1);
  const std::uint64_t n_chunks = (reps + chunk - 1) / chunk;
  std::vector<Acc> partial(n_chunks);

  auto process = [&](std::uint64_t c) {
    const std::uint64_t begin = c * chunk;
    const std::uint64_t end = std::min(reps, begin + chunk);
    Acc& acc = partial[c];
    for (std::uint64_t i = begin; i < end; ++i) {
      Rng rng = derive_stream(seed, i);
      body(rng, i, acc);
    }
  };

  const unsigned workers = static_cast<unsigned>(std::clamp<std::uint64_t>(opts.workers, 1, std::max<std::uint64_t>(n_chunks, 1)));
  if (workers <= 1) {
    for (std::uint64_t c = 0; c < n_chunks; ++c) process(c);
  } else {
    std::atomic<std::uint64_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
      std::vector<std::jthread> pool;
      pool.reserve(workers);
      for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
          try {
            for (std::uint64_t c = next.fetch_add(1); c < n_chunks; c = next.fetch_add(1)) process(c);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next.store(n_chunks);
          }
        });
      }
    }
    if (failure) std::rethrow_exception(failure);
  }

  Acc total{};
  for (const Acc& a : partial) total.merge(a);
  return total;
}

} // namespace qdetect
