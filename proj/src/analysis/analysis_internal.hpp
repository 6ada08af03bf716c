#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "latentgs/analysis.hpp"

namespace latentgs::detail {

PrepareOptions prepare_options(const TrainJob& job);
// `source` is the header of the dataset before preparation; it keys the model cache.
JobOutcome run_prepared_job(const DatasetHeader& source, const PreparedData& data, const TrainJob& job,
                            const JobOptions& options);

// NaN is written as an empty field.
inline void write_number(std::ostream& os, double v) {
  if (!std::isnan(v)) os << v;
}

inline void write_quoted(std::ostream& os, const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) {
    os << text;
    return;
  }
  os << '"';
  for (const char c : text) {
    if (c == '"') os << '"';
    os << (c == '\n' ? ' ' : c);
  }
  os << '"';
}

// Runs task(i) for i in [0, n) on up to `threads` workers.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& task) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) task(i);
    });
  }
}

}  // namespace latentgs::detail
