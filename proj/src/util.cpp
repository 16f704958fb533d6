#include "ultr/util.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ultr {

ParseError::ParseError(const std::string& message, std::size_t line, std::size_t column)
    : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": "
            + message),
      m_line(line),
      m_column(column)
{}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis)
{
    std::uint64_t h = basis;
    for (unsigned char c: bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t mix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view key)
{
    return mix64(mix64(seed) ^ fnv1a(key));
}

std::string format_double(double value)
{
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc{}) {
        throw Error("cannot format double");
    }
    return std::string(buf, end);
}

double parse_double(std::string_view text)
{
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (first != last && *first == '+') {
        ++first;
    }
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || first == last || !std::isfinite(value)) {
        throw DataError("invalid number '" + std::string(text) + "'");
    }
    return value;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot open '" + tmp.string() + "' for writing");
        }
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) {
            throw Error("write failed for '" + tmp.string() + "'");
        }
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

    std::string_view trim(std::string_view s)
    {
        auto b = s.find_first_not_of(" \t\r");
        if (b == std::string_view::npos) {
            return {};
        }
        auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

}  // namespace

KeyValues parse_key_values(std::string_view text)
{
    KeyValues kv;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        ++line_no;
        auto line = text.substr(pos, end - pos);
        pos = end + 1;
        if (auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ParseError("expected 'key = value'", line_no, 1);
        }
        auto key = trim(line.substr(0, eq));
        if (key.empty()) {
            throw ParseError("empty key", line_no, 1);
        }
        kv[std::string(key)] = std::string(trim(line.substr(eq + 1)));
    }
    return kv;
}

std::string format_key_values(const KeyValues& kv)
{
    std::string out;
    for (const auto& [k, v]: kv) {
        out += k + " = " + v + "\n";
    }
    return out;
}

double kv_double(const KeyValues& kv, const std::string& key, double fallback)
{
    auto it = kv.find(key);
    if (it == kv.end()) {
        return fallback;
    }
    try {
        return parse_double(it->second);
    } catch (const DataError&) {
        throw DataError("key '" + key + "': invalid number '" + it->second + "'");
    }
}

long long kv_int(const KeyValues& kv, const std::string& key, long long fallback)
{
    auto it = kv.find(key);
    if (it == kv.end()) {
        return fallback;
    }
    long long value = 0;
    const auto& s = it->second;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
        throw DataError("key '" + key + "': invalid integer '" + s + "'");
    }
    return value;
}

bool kv_bool(const KeyValues& kv, const std::string& key, bool fallback)
{
    auto it = kv.find(key);
    if (it == kv.end()) {
        return fallback;
    }
    const auto& s = it->second;
    if (s == "1" || s == "true" || s == "yes" || s == "on") {
        return true;
    }
    if (s == "0" || s == "false" || s == "no" || s == "off") {
        return false;
    }
    throw DataError("key '" + key + "': invalid boolean '" + s + "'");
}

std::string kv_string(const KeyValues& kv, const std::string& key, const std::string& fallback)
{
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
}

}  // namespace ultr
