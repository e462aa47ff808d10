#include "rosetta/common.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

namespace rosetta {

uint64_t fnv1a64(const void* data, size_t n) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t root, std::string_view stage) {
  return splitmix64(root ^ fnv1a64(stage));
}

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  return splitmix64(seed ^ (salt * 0x9e3779b97f4a7c15ull + 0x165667b19e3779f9ull));
}

int worker_threads() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  int n = std::min(4, hw);
  if (const char* env = std::getenv("ROSETTA_BENCH_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) n = std::min<long>(v, hw) > 0 ? static_cast<int>(std::min<long>(v, hw)) : 1;
  }
  return std::max(1, n);
}

void parallel_for_jobs(int n_jobs, int n_threads,
                       const std::function<void(int, int)>& fn) {
  if (n_jobs <= 0) return;
  int workers = std::max(1, std::min(n_threads, n_jobs));
  if (workers == 1) {
    for (int j = 0; j < n_jobs; ++j) fn(j, 0);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (int j = w; j < n_jobs; j += workers) fn(j, w);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace rosetta
