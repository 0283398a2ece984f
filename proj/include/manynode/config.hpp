#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace manynode {

/// Flat `key = value` configuration. Keys use dotted sections
/// (`network.bandwidth_gbps = 100`); `#` starts a comment; later
/// assignments override earlier ones.
class Config {
public:
    Config() = default;

    static Config parse(const std::string& text, const std::string& origin = "<string>");
    static Config load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

    std::optional<std::string> find(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    /// Comma-separated list value; whitespace around items is trimmed.
    std::vector<std::string> get_list(const std::string& key) const;

    /// All keys beginning with `prefix` (e.g. "binding."), with the prefix removed.
    std::map<std::string, std::string> section(const std::string& prefix) const;

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
    std::string origin_ = "<config>";
};

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char delim);
double parse_double(const std::string& s, const std::string& what);
std::int64_t parse_int(const std::string& s, const std::string& what);

}  // namespace manynode
