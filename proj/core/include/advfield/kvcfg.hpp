#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace advfield {

// Flat "key = value" configuration text with dotted namespaces. Used for
// run configs, checkpoint manifests and effective-config echoes. Keys are
// kept sorted so emitted text is canonical and byte-reproducible.
class KvConfig {
public:
    KvConfig() = default;

    static KvConfig parse(const std::string& text);
    static KvConfig load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value);
    void set(const std::string& key, double value);
    void set(const std::string& key, std::int64_t value);
    void set(const std::string& key, std::uint64_t value);
    void set(const std::string& key, bool value);

    bool has(const std::string& key) const;
    // Throws ConfigError when the key is absent.
    const std::string& get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    // Overlays other's entries onto this one (other wins).
    void merge(const KvConfig& other);

    // Throws ConfigError naming the first key outside the allowed set.
    void reject_unknown_keys(const std::vector<std::string>& allowed) const;

    std::string text() const;
    void save(const std::filesystem::path& path) const;

    const std::map<std::string, std::string>& entries() const { return entries_; }

    // Stable 64-bit fingerprint of the canonical text, hex-encoded.
    std::string fingerprint() const;

private:
    std::map<std::string, std::string> entries_;
};

} // namespace advfield
