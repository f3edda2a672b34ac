#include "gs4dcc/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace gs4dcc {

size_t worker_count() {
  size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("GS4D_THREADS")) {
    try {
      long cap = std::stol(env);
      if (cap >= 1) n = std::min(n, static_cast<size_t>(cap));
    } catch (...) {
      // unparsable cap: ignore
    }
  }
  return n;
}

void parallel_for(size_t n, const std::function<void(size_t, size_t)>& body) {
  const size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    if (n) body(0, n);
    return;
  }
  std::vector<std::thread> threads;
  const size_t chunk = (n + workers - 1) / workers;
  for (size_t w = 0; w < workers; ++w) {
    const size_t begin = w * chunk;
    const size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back(body, begin, end);
  }
  for (auto& t : threads) t.join();
}

}  // namespace gs4dcc
