#include "vns/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace vns {

int worker_count() {
  if (const char* env = std::getenv("VNS_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

bool deterministic_env() {
  const char* env = std::getenv("VNS_DETERMINISTIC");
  return env && std::string(env) == "1";
}

ChunkRange chunk_range(std::size_t n, int chunks, int index) {
  const std::size_t c = static_cast<std::size_t>(chunks);
  const std::size_t i = static_cast<std::size_t>(index);
  return {n * i / c, n * (i + 1) / c};
}

void parallel_chunks(std::size_t n, const std::function<void(int, std::size_t, std::size_t)>& body,
                     int chunks) {
  if (chunks <= 0) chunks = worker_count();
  if (chunks == 1 || n < 2) {
    body(0, 0, n);
    return;
  }
  std::vector<std::exception_ptr> errors(chunks);
  // Chunks are striped over at most worker_count() threads; chunk boundaries
  // do not depend on the thread count.
  const int threads_n = std::min(chunks, worker_count());
  std::vector<std::thread> threads;
  threads.reserve(threads_n - 1);
  auto run = [&](int tid) {
    for (int c = tid; c < chunks; c += threads_n) {
      try {
        const auto r = chunk_range(n, chunks, c);
        body(c, r.begin, r.end);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  for (int t = 1; t < threads_n; ++t) threads.emplace_back(run, t);
  run(0);
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace vns
