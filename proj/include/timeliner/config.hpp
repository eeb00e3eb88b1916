#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "timeliner/annotator.hpp"

namespace timeliner {

/// Minimal TOML document: [section.sub] headers and scalar/array values,
/// flattened to dotted keys. Covers the run-config schema; not a general
/// TOML implementation.
class FlatToml {
public:
    using Value = std::variant<std::string, std::int64_t, double, bool,
                               std::vector<std::string>>;

    static FlatToml parse(const std::string& text);
    std::string dump() const; // canonical form; parse(dump()) == *this

    bool contains(const std::string& key) const { return values_.count(key) > 0; }
    const std::map<std::string, Value>& entries() const { return values_; }

    void set(const std::string& key, Value v) { values_[key] = std::move(v); }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_strings(const std::string& key,
                                         std::vector<std::string> fallback) const;

    /// Applies TIMELINER_-prefixed environment variables whose normalized
    /// name (dots to underscores, uppercased) matches a key of `schema`.
    /// Values parse with the schema entry's type.
    void apply_env_overrides(const FlatToml& schema);

private:
    std::map<std::string, Value> values_;
};

struct SynthSettings {
    int clips = 50;
    int len_min = 200;
    int len_max = 600;
    double action_rate = 0.02;
    double sigma_base = 0.02;
    double fps = 30.0;
};

/// Everything a command run needs, loadable from a TOML file with
/// TIMELINER_* environment overrides. Round-trips losslessly through
/// to_toml()/from_toml().
struct RunConfig {
    std::string manifest;
    std::string model_dir = "models";
    std::string label_dir = "labels";
    std::string output_dir = "out";
    PipelineConfig pipeline = PipelineConfig::defaults();
    SynthSettings synth;
    std::uint64_t seed = 0;

    static RunConfig defaults() { return RunConfig{}; }
    static RunConfig from_toml(const std::string& text, bool apply_env = true);
    static RunConfig from_file(const std::string& path, bool apply_env = true);
    std::string to_toml() const;

    /// FNV-1a over the canonical TOML form; logged into outputs so a report
    /// names the exact configuration that produced it.
    std::string hash() const;
};

std::uint64_t fnv1a64(const std::string& text);

} // namespace timeliner
