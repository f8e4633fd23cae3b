#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <vector>
#include <exception>
#include <atomic>
#include <mutex>

namespace popx {

/// Base error for everything the toolkit reports. Messages are meant for end users.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Three process perspectives every encoded column belongs to.
enum class AttributeType { kControl = 0, kCase = 1, kEvent = 2 };

inline constexpr AttributeType kAllTypes[] = {AttributeType::kControl, AttributeType::kCase,
                                              AttributeType::kEvent};

inline std::string_view to_string(AttributeType t) {
  switch (t) {
    case AttributeType::kControl:
      return "control";
    case AttributeType::kCase:
      return "case";
    case AttributeType::kEvent:
      return "event";
  }
  return "?";
}

inline AttributeType parse_attribute_type(std::string_view s) {
  if (s == "control") return AttributeType::kControl;
  if (s == "case") return AttributeType::kCase;
  if (s == "event") return AttributeType::kEvent;
  throw Error("unknown attribute type '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Numbers

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
  if (v == 0.0) return "0";  // drops the sign of -0.0
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> try_parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline double parse_double(std::string_view s, std::string_view what) {
  auto v = try_parse_double(s);
  if (!v) throw Error(std::string(what) + ": not a number: '" + std::string(s) + "'");
  return *v;
}

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// ---------------------------------------------------------------------------
// Randomness
//
// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. Distributions are implemented here because the std ones are
// implementation-defined, and outputs must be identical across toolchains.

using Rng = std::mt19937_64;

/// splitmix64 finaliser; used to derive independent child seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of child `index` under `parent`. Stable: adding siblings never changes it.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  return mix_seed(mix_seed(parent) ^ mix_seed(index + 0x5851F42D4C957F2DULL));
}

inline Rng make_rng(std::uint64_t seed) { return Rng(mix_seed(seed)); }

/// Uniform integer in [0, n). n must be > 0.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Parallelism

/// Worker count used when callers pass 0.
inline unsigned default_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

/// Runs fn(i) for i in [0, n). Each index must write only its own output slot.
/// The first exception thrown by any task is rethrown after all workers join.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, unsigned threads = 0) {
  if (threads == 0) threads = default_threads();
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const auto count = std::min<std::size_t>(threads, n);
  for (std::size_t t = 0; t < count; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace popx
