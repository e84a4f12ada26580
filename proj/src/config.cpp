#include "sofar/config.hpp"

#include <fstream>
#include <sstream>

#include "sofar/error.hpp"

namespace sofar {

namespace {
std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}
}  // namespace

KvConfig KvConfig::parse(const std::string& text) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": unterminated section header");
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        cfg.entries_.push_back({section, key, value});
    }
    return cfg;
}

KvConfig KvConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string KvConfig::serialize() const {
    std::ostringstream out;
    std::string section = "\x01";  // never a real section name
    for (const auto& e : entries_) {
        if (e.section != section) {
            section = e.section;
            if (!section.empty()) out << '[' << section << "]\n";
        }
        out << e.key << " = " << e.value << '\n';
    }
    return out.str();
}

void KvConfig::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write config file '" + path + "'");
    out << serialize();
}

std::optional<std::string> KvConfig::get(const std::string& section,
                                         const std::string& key) const {
    for (const auto& e : entries_)
        if (e.section == section && e.key == key) return e.value;
    return std::nullopt;
}

std::string KvConfig::get_or(const std::string& section, const std::string& key,
                             const std::string& fallback) const {
    auto v = get(section, key);
    return v ? *v : fallback;
}

double KvConfig::get_num(const std::string& section, const std::string& key,
                         double fallback) const {
    auto v = get(section, key);
    if (!v) return fallback;
    try {
        return std::stod(*v);
    } catch (const std::exception&) {
        throw ConfigError("config [" + section + "] " + key + ": '" + *v + "' is not a number");
    }
}

void KvConfig::set(const std::string& section, const std::string& key,
                   const std::string& value) {
    for (auto& e : entries_)
        if (e.section == section && e.key == key) {
            e.value = value;
            return;
        }
    entries_.push_back({section, key, value});
}

void KvConfig::require_known_keys(
    const std::map<std::string, std::set<std::string>>& allowed) const {
    for (const auto& e : entries_) {
        auto it = allowed.find(e.section);
        if (it == allowed.end())
            throw ConfigError("unknown config section [" + e.section + "]");
        if (!it->second.count(e.key))
            throw ConfigError("unknown config key '" + e.key + "' in section [" + e.section +
                              "]");
    }
}

bool KvConfig::operator==(const KvConfig& o) const {
    if (entries_.size() != o.entries_.size()) return false;
    for (size_t i = 0; i < entries_.size(); ++i) {
        const auto& a = entries_[i];
        const auto& b = o.entries_[i];
        if (a.section != b.section || a.key != b.key || a.value != b.value) return false;
    }
    return true;
}

}  // namespace sofar
