#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dnlb {

using DocId = std::uint32_t;

/// Every recoverable failure in the library is reported with this type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename... Args>
[[noreturn]] inline void fail(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  throw Error(os.str());
}

struct ScoredDoc {
  DocId id = 0;
  double score = 0.0;

  friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

/// The one ranking order used everywhere: higher score first, ties broken
/// by ascending internal id.
inline bool ranks_before(double score_a, DocId id_a, double score_b,
                         DocId id_b) {
  if (score_a != score_b) return score_a > score_b;
  return id_a < id_b;
}

inline bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) {
  return ranks_before(a.score, a.id, b.score, b.id);
}

using RankedList = std::vector<ScoredDoc>;

/// Keeps the first min(k, n) entries of `scores` in canonical order.
inline RankedList top_k_from_scores(std::span<const double> scores,
                                    std::size_t k) {
  RankedList all(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    all[i] = {static_cast<DocId>(i), scores[i]};
  }
  const std::size_t keep = std::min(k, all.size());
  auto cmp = [](const ScoredDoc& a, const ScoredDoc& b) {
    return ranks_before(a, b);
  };
  if (keep < all.size()) {
    std::partial_sort(all.begin(), all.begin() + static_cast<long>(keep),
                      all.end(), cmp);
    all.resize(keep);
  } else {
    std::sort(all.begin(), all.end(), cmp);
  }
  return all;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    fail("dimension mismatch: ", a.size(), " vs ", b.size());
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// ---------------------------------------------------------------------------
// Randomness. std::mt19937_64 is fully specified by the standard; the
// distributions are not, so we derive reals and bounded integers ourselves
// to keep outputs identical across standard libraries.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

/// FNV-1a, 64 bit. Used for feature hashing and for keying rng streams.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) fail("Rng::below called with n = 0");
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() -
        std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// Independent stream for (global seed, query id, step).
inline Rng query_stream(std::uint64_t seed, std::string_view qid,
                        std::uint64_t step) {
  return Rng(mix_seed(mix_seed(seed, fnv1a64(qid)), step));
}

// ---------------------------------------------------------------------------
// Logging to stderr, gated by DNLB_LOG in {error, info, debug}.

enum class LogLevel { error = 0, info = 1, debug = 2 };

inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("DNLB_LOG");
    if (env == nullptr) return LogLevel::error;
    const std::string_view v(env);
    if (v == "debug") return LogLevel::debug;
    if (v == "info") return LogLevel::info;
    return LogLevel::error;
  }();
  return level;
}

template <typename... Args>
void log(LogLevel level, const Args&... args) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  static constexpr const char* names[] = {"error", "info", "debug"};
  std::ostringstream os;
  os << "[dnlb " << names[static_cast<int>(level)] << "] ";
  (os << ... << args);
  os << '\n';
  std::cerr << os.str();
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

}  // namespace dnlb
