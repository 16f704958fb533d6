#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ultr {

/// Fixed SERP length: every click log and every DLA list has exactly this many entries.
inline constexpr std::size_t kListLength = 10;

/// Heuristic matching features per (query, document) pair: 8 per field x 3 fields.
inline constexpr std::size_t kNumFeatures = 24;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text. Carries 1-based line and column of the offending token.
class ParseError : public Error {
  public:
    ParseError(const std::string& message, std::size_t line, std::size_t column);

    std::size_t line() const noexcept { return m_line; }
    std::size_t column() const noexcept { return m_column; }

  private:
    std::size_t m_line;
    std::size_t m_column;
};

/// Well-formed input that violates a data invariant (wrong list length, duplicate ids, ...).
class DataError : public Error {
  public:
    using Error::Error;
};

/// 64-bit FNV-1a. Stable across platforms, unlike std::hash.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 14695981039346656037ULL);

/// splitmix64 finalizer; used to derive independent substream seeds.
std::uint64_t mix64(std::uint64_t x);

/// Seed for a per-key random substream, independent of iteration order and thread schedule.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key);

using Rng = std::mt19937_64;

/// Shortest decimal representation that parses back to exactly `value`.
std::string format_double(double value);

/// Parses a full string as a finite double; throws DataError otherwise.
double parse_double(std::string_view text);

/// Writes `contents` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

using KeyValues = std::map<std::string, std::string>;

/// `key = value` lines; blank lines and `#` comments ignored. Later keys override earlier ones.
KeyValues parse_key_values(std::string_view text);
std::string format_key_values(const KeyValues& kv);

/// Typed lookups with a fallback; malformed values throw DataError naming the key.
double kv_double(const KeyValues& kv, const std::string& key, double fallback);
long long kv_int(const KeyValues& kv, const std::string& key, long long fallback);
bool kv_bool(const KeyValues& kv, const std::string& key, bool fallback);
std::string kv_string(const KeyValues& kv, const std::string& key, const std::string& fallback);

}  // namespace ultr
