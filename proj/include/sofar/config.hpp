#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace sofar {

// Sectioned key/value document:
//   [train]
//   epochs = 5
// Preserves entry order so serialize(parse(x)) is stable; parse(serialize(c))
// reproduces c exactly.
class KvConfig {
public:
    struct Entry {
        std::string section, key, value;
    };

    static KvConfig parse(const std::string& text);
    static KvConfig parse_file(const std::string& path);

    std::string serialize() const;
    void save(const std::string& path) const;

    std::optional<std::string> get(const std::string& section, const std::string& key) const;
    std::string get_or(const std::string& section, const std::string& key,
                       const std::string& fallback) const;
    double get_num(const std::string& section, const std::string& key, double fallback) const;
    void set(const std::string& section, const std::string& key, const std::string& value);

    // Throws ConfigError if any entry's key is not listed for its section.
    void require_known_keys(const std::map<std::string, std::set<std::string>>& allowed) const;

    const std::vector<Entry>& entries() const { return entries_; }
    bool operator==(const KvConfig& o) const;

private:
    std::vector<Entry> entries_;
};

}  // namespace sofar
