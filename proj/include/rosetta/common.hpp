#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rosetta {

// Error taxonomy. Every failure surfaced to a caller carries one of three
// categories so the CLI can map it to a stable exit status:
//   config -- a bad configuration value or an inconsistent setup,
//   input  -- malformed runtime data handed to an operation,
//   io     -- filesystem / serialization trouble.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& msg)
      : std::runtime_error(msg), category_(std::move(category)) {}
  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& msg) : Error("input", msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error("io", msg) {}
};

// 64-bit FNV-1a. Used for deriving stage seeds from names and for hashing
// token sequences into per-call RNG seeds.
uint64_t fnv1a64(const void* data, size_t n);
uint64_t fnv1a64(std::string_view s);

// Finalizer from the splitmix64 generator; a cheap, well-mixed 64->64 hash.
uint64_t splitmix64(uint64_t x);

// One root seed fans out to per-stage seeds through a documented hash so
// that independent pipeline stages never share RNG streams:
//   stage_seed = splitmix64(root ^ fnv1a64(stage_name))
uint64_t derive_seed(uint64_t root, std::string_view stage);

// Mixes an integer salt into a seed (for per-record / per-epoch streams).
uint64_t mix_seed(uint64_t seed, uint64_t salt);

// Deterministic RNG wrapper. The engine is mt19937_64 (its sequence is
// pinned by the standard); all value mappings are spelled out here because
// std:: distributions are implementation-defined and would break
// reproducibility across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n), n > 0. Multiply-shift mapping (bias is
  // negligible at 64 bits and the mapping is fixed forever).
  uint64_t uniform_int(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller, two uniforms per draw, no cached spare
  // (keeps the engine state the only serializable state).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    return r * std::cos(kTwoPi * u2);
  }

  // In-place Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string state() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }

  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    if (is.fail()) throw IoError("invalid rng state string");
  }

 private:
  std::mt19937_64 eng_;
};

// Worker parallelism for batch gradient jobs and evaluation. Defaults to
// min(4, hardware threads); the ROSETTA_BENCH_THREADS environment variable
// caps it when set.
int worker_threads();

// Runs fn(job_index) for job_index in [0, n_jobs) across up to n_threads
// threads. Job j is always executed by worker (j % n_workers), so any
// per-worker accumulation is reproducible for a fixed thread count.
void parallel_for_jobs(int n_jobs, int n_threads,
                       const std::function<void(int, int)>& fn);

// Dense row-major grids for token / mask tensors.
template <class T>
struct Grid2 {
  int n0 = 0, n1 = 0;
  std::vector<T> data;

  Grid2() = default;
  Grid2(int a, int b, T fill = T{})
      : n0(a), n1(b), data(static_cast<size_t>(a) * static_cast<size_t>(b), fill) {}

  T& operator()(int i, int j) { return data[static_cast<size_t>(i) * n1 + j]; }
  const T& operator()(int i, int j) const {
    return data[static_cast<size_t>(i) * n1 + j];
  }
  bool operator==(const Grid2&) const = default;
};

template <class T>
struct Grid3 {
  int n0 = 0, n1 = 0, n2 = 0;
  std::vector<T> data;

  Grid3() = default;
  Grid3(int a, int b, int c, T fill = T{})
      : n0(a), n1(b), n2(c),
        data(static_cast<size_t>(a) * b * c, fill) {}

  T& operator()(int i, int j, int k) {
    return data[(static_cast<size_t>(i) * n1 + j) * n2 + k];
  }
  const T& operator()(int i, int j, int k) const {
    return data[(static_cast<size_t>(i) * n1 + j) * n2 + k];
  }
  bool operator==(const Grid3&) const = default;
};

}  // namespace rosetta
