#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace rexpath {

enum class ErrorKind {
  kMalformedMarkup,
  kEmptyPage,
  kDisjointRoots,
  kMixedWebsites,
  kAnnotationMismatch,
  kInvalidTemplate,
  kUnknownVertical,
  kIdOutOfRange,
  kNonFinite,
  kNoPositives,
  kHashMismatch,
  kZeroShotLeak,
  kInvalidConfig,
  kIo,
};

inline const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kMalformedMarkup: return "MalformedMarkup";
    case ErrorKind::kEmptyPage: return "EmptyPage";
    case ErrorKind::kDisjointRoots: return "DisjointRoots";
    case ErrorKind::kMixedWebsites: return "MixedWebsites";
    case ErrorKind::kAnnotationMismatch: return "AnnotationMismatchRate";
    case ErrorKind::kInvalidTemplate: return "InvalidTemplate";
    case ErrorKind::kUnknownVertical: return "UnknownVertical";
    case ErrorKind::kIdOutOfRange: return "IdOutOfRange";
    case ErrorKind::kNonFinite: return "NonFinite";
    case ErrorKind::kNoPositives: return "NoPositives";
    case ErrorKind::kHashMismatch: return "HashMismatch";
    case ErrorKind::kZeroShotLeak: return "ZeroShotLeak";
    case ErrorKind::kInvalidConfig: return "InvalidConfig";
    case ErrorKind::kIo: return "Io";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // Validation failures map to CLI exit code 2, everything else to 1.
  bool is_validation() const noexcept {
    return kind_ == ErrorKind::kAnnotationMismatch ||
           kind_ == ErrorKind::kHashMismatch ||
           kind_ == ErrorKind::kZeroShotLeak ||
           kind_ == ErrorKind::kInvalidConfig ||
           kind_ == ErrorKind::kInvalidTemplate ||
           kind_ == ErrorKind::kUnknownVertical;
  }

 private:
  ErrorKind kind_;
};

// FNV-1a, 64-bit. Stable across platforms, used for seeds and content hashes.
inline std::uint64_t fnv1a(std::string_view data,
                           std::uint64_t h = 14695981039346656037ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// splitmix64 finalizer; combines seed streams.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

// Portable bounded draw; std::uniform_int_distribution is not specified
// bit-for-bit across standard libraries.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

inline double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_index(rng, i)]);
  }
}

// Worker count, bounded by REXPATH_THREADS when set.
inline unsigned worker_count() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("REXPATH_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return std::min<unsigned>(hw, static_cast<unsigned>(v));
  }
  return hw;
}

// Runs fn(i) for i in [0, n). Results must be written to per-index slots so
// the outcome never depends on scheduling. Exceptions are rethrown in index
// order (the lowest failing index wins).
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_count(), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline void log_info(const std::string& msg) { std::cerr << "[rexpath] " << msg << '\n'; }
inline void log_warn(const std::string& msg) { std::cerr << "[rexpath] warning: " << msg << '\n'; }

}  // namespace rexpath
