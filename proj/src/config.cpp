#include "manynode/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "manynode/errors.hpp"

namespace manynode {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& s, char delim) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, delim)) out.push_back(trim(item));
    if (!s.empty() && s.back() == delim) out.emplace_back();
    return out;
}

double parse_double(const std::string& s, const std::string& what) {
    const std::string t = trim(s);
    double value = 0.0;
    const auto* end = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(t.data(), end, value);
    if (ec != std::errc() || ptr != end || t.empty()) {
        throw ParseError(what + ": expected a number, got '" + s + "'");
    }
    return value;
}

std::int64_t parse_int(const std::string& s, const std::string& what) {
    const std::string t = trim(s);
    std::int64_t value = 0;
    const auto* end = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(t.data(), end, value);
    if (ec == std::errc() && ptr == end && !t.empty()) return value;
    // Accept integral values written in float notation, e.g. "1e9".
    const double d = parse_double(t, what);
    if (d != static_cast<double>(static_cast<std::int64_t>(d))) {
        throw ParseError(what + ": expected an integer, got '" + s + "'");
    }
    return static_cast<std::int64_t>(d);
}

Config Config::parse(const std::string& text, const std::string& origin) {
    Config cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ParseError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key = trim(body.substr(0, eq));
        if (key.empty()) throw ParseError(origin + ":" + std::to_string(line_no) + ": empty key");
        cfg.values_[key] = trim(body.substr(eq + 1));
    }
    return cfg;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path.string());
}

std::optional<std::string> Config::find(const std::string& key) const {
    if (auto it = values_.find(key); it != values_.end()) return it->second;
    return std::nullopt;
}

std::string Config::get_string(const std::string& key) const {
    if (auto v = find(key)) return *v;
    throw ConfigError(origin_ + ": missing required key '" + key + "'");
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    return find(key).value_or(fallback);
}

double Config::get_double(const std::string& key) const { return parse_double(get_string(key), key); }

double Config::get_double(const std::string& key, double fallback) const {
    if (auto v = find(key)) return parse_double(*v, key);
    return fallback;
}

std::int64_t Config::get_int(const std::string& key) const { return parse_int(get_string(key), key); }

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
    if (auto v = find(key)) return parse_int(*v, key);
    return fallback;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    auto v = find(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw ParseError(key + ": expected a boolean, got '" + *v + "'");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
    auto v = find(key);
    if (!v || trim(*v).empty()) return {};
    return split(*v, ',');
}

std::map<std::string, std::string> Config::section(const std::string& prefix) const {
    std::map<std::string, std::string> out;
    for (auto it = values_.lower_bound(prefix); it != values_.end(); ++it) {
        if (it->first.compare(0, prefix.size(), prefix) != 0) break;
        out.emplace(it->first.substr(prefix.size()), it->second);
    }
    return out;
}

}  // namespace manynode
