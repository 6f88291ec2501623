#include "citekg/common.hpp"

#include <atomic>
#include <bit>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace citekg {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace {

bool parse_uint(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace

Date make_date(int year, unsigned month, unsigned day) {
  using namespace std::chrono;
  const sys_days sd{year_month_day{std::chrono::year{year}, std::chrono::month{month},
                                   std::chrono::day{day}}};
  return Date{static_cast<std::int32_t>(sd.time_since_epoch().count())};
}

std::optional<Date> parse_date(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '^')) text.remove_prefix(1);
  const auto cut = text.find_first_of("T ");
  if (cut != std::string_view::npos) text = text.substr(0, cut);
  int y = 0, m = 1, d = 1;
  if (text.size() == 4) {
    if (!parse_uint(text, y)) return std::nullopt;
  } else {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    if (!parse_uint(text.substr(0, 4), y) || !parse_uint(text.substr(5, 2), m) ||
        !parse_uint(text.substr(8, 2), d))
      return std::nullopt;
  }
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                           std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return Date{static_cast<std::int32_t>(sys_days{ymd}.time_since_epoch().count())};
}

std::string format_date(Date d) {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{days{d.days}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::string rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void set_rng_state(Rng& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (!is) throw ConfigError("corrupt rng state");
}

std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  Fnv1a h;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return h.digest();
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void BinaryWriter::f32_array(std::span<const double> v) {
  std::vector<float> tmp(v.begin(), v.end());
  array<float>(tmp);
}

void BinaryReader::read_raw(void* dst, std::size_t n) {
  in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) fail("unexpected end of file");
}

std::string BinaryReader::bytes(std::size_t n) {
  std::string s(n, '\0');
  read_raw(s.data(), n);
  return s;
}

std::string BinaryReader::string() {
  const auto n = pod<std::uint32_t>();
  if (n > (1u << 30)) fail("string length out of range");
  return bytes(n);
}

void BinaryReader::f32_array(std::span<double> v) {
  std::vector<float> tmp(v.size());
  array<float>(tmp);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = tmp[i];
}

void BinaryReader::expect_magic(std::string_view magic) {
  if (bytes(magic.size()) != magic) fail("bad magic, expected " + std::string(magic));
}

void BinaryReader::fail(const std::string& msg) const {
  throw ConfigError(source_ + ": " + msg);
}

void load_relaxed(std::span<double> dst, std::span<double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i)
    dst[i] = std::atomic_ref<double>(src[i]).load(std::memory_order_relaxed);
}

void store_relaxed(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i)
    std::atomic_ref<double>(dst[i]).store(src[i], std::memory_order_relaxed);
}

}  // namespace citekg
