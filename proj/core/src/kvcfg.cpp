#include "advfield/kvcfg.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "advfield/errors.hpp"
#include "advfield/tensor_io.hpp"

namespace advfield {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

KvConfig KvConfig::parse(const std::string& text) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        }
        cfg.entries_[key] = value;
    }
    return cfg;
}

KvConfig KvConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

void KvConfig::set(const std::string& key, const std::string& value) { entries_[key] = value; }
void KvConfig::set(const std::string& key, double value) { entries_[key] = format_double(value); }
void KvConfig::set(const std::string& key, std::int64_t value) { entries_[key] = std::to_string(value); }
void KvConfig::set(const std::string& key, std::uint64_t value) { entries_[key] = std::to_string(value); }
void KvConfig::set(const std::string& key, bool value) { entries_[key] = value ? "true" : "false"; }

bool KvConfig::has(const std::string& key) const { return entries_.count(key) != 0; }

const std::string& KvConfig::get(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("missing config key '" + key + "'");
    return it->second;
}

std::string KvConfig::get_or(const std::string& key, const std::string& fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

double KvConfig::get_double(const std::string& key) const {
    try {
        return parse_double(get(key));
    } catch (const ConfigError&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + get(key) + "'");
    }
}

std::int64_t KvConfig::get_int(const std::string& key) const {
    const std::string& s = get(key);
    std::int64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ConfigError("config key '" + key + "': expected an integer, got '" + s + "'");
    }
    return v;
}

std::uint64_t KvConfig::get_u64(const std::string& key) const {
    const std::string& s = get(key);
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + s + "'");
    }
    return v;
}

bool KvConfig::get_bool(const std::string& key) const {
    const std::string& s = get(key);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + s + "'");
}

void KvConfig::merge(const KvConfig& other) {
    for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

void KvConfig::reject_unknown_keys(const std::vector<std::string>& allowed) const {
    for (const auto& [k, v] : entries_) {
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
            throw ConfigError("unknown config key '" + k + "'");
        }
    }
}

std::string KvConfig::text() const {
    std::string out;
    for (const auto& [k, v] : entries_) {
        out += k;
        out += " = ";
        out += v;
        out += "\n";
    }
    return out;
}

void KvConfig::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write config file " + path.string());
    out << text();
    if (!out) throw IoError("stream failure writing " + path.string());
}

std::string KvConfig::fingerprint() const {
    // FNV-1a over the canonical text
    std::uint64_t h = 1469598103934665603ULL;
    for (const char c : text()) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    char buf[17];
    static const char* digits = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = digits[h & 0xf];
        h >>= 4;
    }
    buf[16] = '\0';
    return std::string(buf);
}

} // namespace advfield
