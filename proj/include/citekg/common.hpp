#pragma once
// Shared vocabulary: error taxonomy, calendar dates, portable RNG helpers,
// content hashing and little-endian binary IO.

#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace citekg {

// ---------------------------------------------------------------------------
// Errors. Each class maps onto one process exit code of the CLI.

enum class ErrorKind { Internal = 1, Input = 2, Numeric = 3, Contract = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& msg)
      : Error(ErrorKind::Input, source + ":" + std::to_string(line) + ": " + msg),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& msg) : Error(ErrorKind::Input, msg) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(ErrorKind::Input, msg) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(ErrorKind::Numeric, msg) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& msg) : Error(ErrorKind::Contract, msg) {}
};

// ---------------------------------------------------------------------------
// Calendar dates at day resolution (days since 1970-01-01).

struct Date {
  std::int32_t days = 0;
  friend auto operator<=>(const Date&, const Date&) = default;
};

// Accepts YYYY-MM-DD, optionally followed by a time part ("T..." or " ...").
// A bare YYYY maps to January 1st. Returns nullopt on malformed input.
std::optional<Date> parse_date(std::string_view text);
std::string format_date(Date d);
Date make_date(int year, unsigned month, unsigned day);

// ---------------------------------------------------------------------------
// RNG. std distributions are implementation-defined, so sampling goes through
// these helpers to keep seeded runs identical across standard libraries.

using Rng = std::mt19937_64;

inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  // Lemire-style rejection without modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform_real(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = uniform_index(rng, i);
    std::swap(items[i - 1], items[j]);
  }
}

template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  shuffle(std::span<T>(items), rng);
}

// splitmix64 finalizer, used to derive independent per-query / per-worker seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string rng_state(const Rng& rng);
void set_rng_state(Rng& rng, const std::string& state);

// ---------------------------------------------------------------------------
// FNV-1a 64-bit content hash.

class Fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

std::uint64_t hash_file(const std::string& path);
std::string hex64(std::uint64_t v);

// ---------------------------------------------------------------------------
// Little-endian binary IO. The host is assumed little-endian (checked at
// compile time in common.cpp).

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  template <typename T>
  void pod(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  template <typename T>
  void array(std::span<const T> v) {
    static_assert(std::is_trivially_copyable_v<T>);
    out_.write(reinterpret_cast<const char*>(v.data()),
               static_cast<std::streamsize>(v.size_bytes()));
  }
  void bytes(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }
  void string(std::string_view s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  // Doubles narrowed to little-endian f32.
  void f32_array(std::span<const double> v);

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  BinaryReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  template <typename T>
  T pod() {
    static_assert(std::is_trivially_copyable_v<T>);
    T v;
    read_raw(&v, sizeof(T));
    return v;
  }
  template <typename T>
  void array(std::span<T> v) {
    read_raw(v.data(), v.size_bytes());
  }
  std::string bytes(std::size_t n);
  std::string string();
  void f32_array(std::span<double> v);
  void expect_magic(std::string_view magic);
  [[noreturn]] void fail(const std::string& msg) const;

 private:
  void read_raw(void* dst, std::size_t n);
  std::istream& in_;
  std::string source_;
};

// Relaxed-consistency helpers for lock-free parameter sharing between
// training workers.
void load_relaxed(std::span<double> dst, std::span<double> src);
void store_relaxed(std::span<double> dst, std::span<const double> src);

}  // namespace citekg
