#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "phrasedec/common.hpp"

namespace phrasedec {

struct ConfigKey {
    const char* name;
    const char* def;
    const char* help;
};

// Flat "key = value" configuration with a closed key registry; unknown keys
// are rejected. Values are strings; typed getters parse on access.
class RunConfig {
  public:
    RunConfig();

    static const std::vector<ConfigKey>& registry();

    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value);  // ConfigError on unknown key

    const std::string& str(const std::string& key) const;
    int geti(const std::string& key) const;
    double getd(const std::string& key) const;
    uint64_t getu(const std::string& key) const;
    bool getb(const std::string& key) const;

    bool is_set(const std::string& key) const;  // non-empty value
    // Value of `key` when set, otherwise work_dir-relative fallback name.
    std::string path_or_default(const std::string& key,
                                const std::string& fallback) const;

    static std::string help_text();

  private:
    std::map<std::string, std::string> values_;
};

}  // namespace phrasedec
