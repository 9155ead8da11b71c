#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace bindecomp {

// Exit codes used by the CLI: 1 usage, 2 data, 3 numeric divergence.
class Error : public std::runtime_error {
 public:
  Error(const std::string& what, int exit_code)
      : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const { return exit_code_; }

 private:
  int exit_code_;
};

#define BINDECOMP_ERROR(Name, Code)                                  \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(what, Code) {}    \
  }

BINDECOMP_ERROR(UsageError, 1);

// Data-shaped failures.
BINDECOMP_ERROR(MalformedName, 2);
BINDECOMP_ERROR(AmbiguousVariant, 2);
BINDECOMP_ERROR(EmptyCorpus, 2);
BINDECOMP_ERROR(DuplicateId, 2);
BINDECOMP_ERROR(StratumTooSmall, 2);
BINDECOMP_ERROR(NotADisassembly, 2);
BINDECOMP_ERROR(MissingTextSection, 2);
BINDECOMP_ERROR(NothingLeft, 2);
BINDECOMP_ERROR(NoFunctionsLeft, 2);
BINDECOMP_ERROR(EmptyTrainingSet, 2);
BINDECOMP_ERROR(EmptyInput, 2);
BINDECOMP_ERROR(EverythingDropped, 2);
BINDECOMP_ERROR(LengthMismatch, 2);
BINDECOMP_ERROR(UnknownLabel, 2);
BINDECOMP_ERROR(OneClassOnly, 2);
BINDECOMP_ERROR(EmptyAfterFilter, 2);
BINDECOMP_ERROR(ShapeMismatch, 2);
BINDECOMP_ERROR(SequenceTooLong, 2);
BINDECOMP_ERROR(IdOutOfRange, 2);
BINDECOMP_ERROR(IoError, 2);

// Numeric failures.
BINDECOMP_ERROR(NonFinite, 3);
BINDECOMP_ERROR(Divergence, 3);

#undef BINDECOMP_ERROR

struct Diagnostic {
  std::size_t line = 0;  // 1-based; 0 when not tied to a line
  std::string message;
};
using Diagnostics = std::vector<Diagnostic>;

inline void diag(Diagnostics* sink, std::size_t line, std::string message) {
  if (sink) sink->push_back({line, std::move(message)});
}

// ---------------------------------------------------------------------------
// Deterministic randomness.
//
// std::shuffle and the standard distributions are implementation-defined, so
// everything that must reproduce bit-for-bit across platforms goes through
// this wrapper: a standardized mt19937_64 engine plus hand-rolled draws.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // Warm up through splitmix so nearby seeds diverge.
    std::uint64_t s = seed;
    state_ = splitmix64(s);
    for (int i = 0; i < 4; ++i) splitmix64(state_);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0,1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n); n > 0. Rejection sampling keeps it unbiased
  // and platform-independent.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw UsageError("Rng::next_below: n must be > 0");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller (no cached spare; call order stays simple
  // and reproducible).
  double next_normal() {
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  // Fisher-Yates with our own index draws.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i + 1));
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// Derive a child seed from a parent seed and a string key (e.g. a stratum
// name) so per-group decisions do not depend on group iteration order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view key) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : key) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Content hashing (FNV-1a 64) for run manifests and reproducibility checks.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

inline std::string content_digest(std::string_view bytes) { return hex64(fnv1a64(bytes)); }

// ---------------------------------------------------------------------------
// File helpers.
// ---------------------------------------------------------------------------

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write: " + path.string());
}

// ---------------------------------------------------------------------------
// Small string utilities.
// ---------------------------------------------------------------------------

inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

// Run fn(i) for i in [0, n) on up to `jobs` threads. Results must be written
// to pre-sized slots so the output order never depends on scheduling.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  if (jobs <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  jobs = std::min(jobs, n);
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  std::vector<std::exception_ptr> errors(jobs);
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w]() {
      try {
        for (std::size_t i = w; i < n; i += jobs) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace bindecomp
