// cli.hpp - scenario files and the decohist front end

#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace decohist::cli {

// Malformed or invalid scenario input; maps to exit status 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct KeyDoc {
    const char* key;      // "section.name"
    const char* fallback; // default shown in the schema, "" when required
    const char* doc;
};

// Every key a scenario file may contain.
const std::vector<KeyDoc>& schema();
const std::vector<std::string>& kinds();

// Flat INI file: [section] headers, "name = value" lines, '#' or ';' comments.
class Config {
public:
    struct Entry {
        std::string text;
        std::string origin;  // file name or "--set"
        int line{0};
    };

    static Config parse(std::istream& in, const std::string& origin);
    static Config load(const std::string& path);

    // "section.name=value", replacing any value from the file.
    void apply_override(const std::string& assignment);
    // Rejects keys missing from the schema, naming the key and its position.
    void check_known() const;

    bool has(const std::string& key) const;
    double number(const std::string& key, std::optional<double> fallback = std::nullopt);
    std::int64_t integer(const std::string& key, std::optional<std::int64_t> fallback = std::nullopt);
    bool flag(const std::string& key, std::optional<bool> fallback = std::nullopt);
    std::string word(const std::string& key, const std::vector<std::string>& allowed,
                     std::optional<std::string> fallback = std::nullopt);
    std::vector<double> numbers(const std::string& key,
                                std::optional<std::vector<double>> fallback = std::nullopt);

    // Keys present in the input that no reader asked for.
    std::vector<std::string> unused() const;
    // Every value read, as canonical text, in key order.
    const std::map<std::string, std::string>& resolved() const noexcept { return resolved_; }

    [[noreturn]] void fail(const std::string& key, const std::string& why) const;

private:
    const Entry* find(const std::string& key) const;
    std::string where(const std::string& key) const;

    std::map<std::string, Entry> entries_;
    std::map<std::string, std::string> resolved_;
};

struct RunOptions {
    std::string kind;
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string out_dir{"."};
};

// Runs one scenario and returns the exit status: 0 success, 2 config error,
// 3 numerical failure. Diagnostics go to err.
int run_scenario(const RunOptions& opt, std::ostream& err);

}  // namespace decohist::cli
