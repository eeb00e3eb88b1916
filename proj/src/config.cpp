#include "timeliner/config.hpp"

#include <algorithm>
#include <cctype>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "timeliner/errors.hpp"

extern char** environ;

namespace timeliner {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

bool bare_key_ok(const std::string& k) {
    if (k.empty()) {
        return false;
    }
    for (char c : k) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' &&
            c != '.') {
            return false;
        }
    }
    return true;
}

std::string parse_quoted(const std::string& raw, int line_no) {
    if (raw.size() < 2 || raw.front() != '"' || raw.back() != '"') {
        throw DataError("config line " + std::to_string(line_no) + ": bad string " + raw);
    }
    std::string out;
    for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
        char c = raw[i];
        if (c == '\\' && i + 2 < raw.size()) {
            const char e = raw[++i];
            c = e == 'n' ? '\n' : e == 't' ? '\t' : e;
        }
        out.push_back(c);
    }
    return out;
}

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') {
            out.push_back('\\');
        }
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

FlatToml::Value parse_scalar(const std::string& raw, int line_no) {
    if (raw.empty()) {
        throw DataError("config line " + std::to_string(line_no) + ": missing value");
    }
    if (raw.front() == '"') {
        return parse_quoted(raw, line_no);
    }
    if (raw == "true") {
        return true;
    }
    if (raw == "false") {
        return false;
    }
    // integer if it parses fully without . e E
    if (raw.find_first_of(".eE") == std::string::npos) {
        char* endp = nullptr;
        const long long v = std::strtoll(raw.c_str(), &endp, 10);
        if (endp != raw.c_str() && *endp == '\0') {
            return static_cast<std::int64_t>(v);
        }
    }
    char* endp = nullptr;
    const double d = std::strtod(raw.c_str(), &endp);
    if (endp != raw.c_str() && *endp == '\0') {
        return d;
    }
    throw DataError("config line " + std::to_string(line_no) + ": cannot parse value " +
                    raw);
}

std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) {
            in_string = !in_string;
        } else if (line[i] == '#' && !in_string) {
            return line.substr(0, i);
        }
    }
    return line;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    std::string s(buf);
    // keep floats distinguishable from ints on re-parse
    if (s.find_first_of(".eEn") == std::string::npos) {
        s += ".0";
    }
    return s;
}

std::string normalize_env_key(const std::string& dotted) {
    std::string out;
    for (char c : dotted) {
        out.push_back(c == '.' || c == '-' ? '_'
                                           : static_cast<char>(std::toupper(
                                                 static_cast<unsigned char>(c))));
    }
    return out;
}

} // namespace

FlatToml FlatToml::parse(const std::string& text) {
    FlatToml doc;
    std::istringstream is(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        line = trim(strip_comment(line));
        if (line.empty()) {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw DataError("config line " + std::to_string(line_no) +
                                ": unterminated section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (!bare_key_ok(section)) {
                throw DataError("config line " + std::to_string(line_no) +
                                ": bad section name [" + section + "]");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw DataError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string raw = trim(line.substr(eq + 1));
        if (!bare_key_ok(key)) {
            throw DataError("config line " + std::to_string(line_no) + ": bad key '" + key +
                            "'");
        }
        const std::string full = section.empty() ? key : section + "." + key;
        if (doc.values_.count(full)) {
            throw DataError("config line " + std::to_string(line_no) + ": duplicate key " +
                            full);
        }
        if (!raw.empty() && raw.front() == '[') {
            if (raw.back() != ']') {
                throw DataError("config line " + std::to_string(line_no) +
                                ": unterminated array");
            }
            std::vector<std::string> items;
            std::string body = raw.substr(1, raw.size() - 2);
            std::string cell;
            bool in_string = false;
            for (char c : body) {
                if (c == '"') {
                    in_string = !in_string;
                }
                if (c == ',' && !in_string) {
                    items.push_back(trim(cell));
                    cell.clear();
                } else {
                    cell.push_back(c);
                }
            }
            if (!trim(cell).empty()) {
                items.push_back(trim(cell));
            }
            std::vector<std::string> strings;
            for (const auto& item : items) {
                strings.push_back(parse_quoted(item, line_no));
            }
            doc.values_[full] = std::move(strings);
        } else {
            doc.values_[full] = parse_scalar(raw, line_no);
        }
    }
    return doc;
}

std::string FlatToml::dump() const {
    // group by section, root keys first
    std::map<std::string, std::vector<std::pair<std::string, const Value*>>> sections;
    for (const auto& [key, value] : values_) {
        const auto dot = key.rfind('.');
        const std::string section = dot == std::string::npos ? "" : key.substr(0, dot);
        const std::string leaf = dot == std::string::npos ? key : key.substr(dot + 1);
        sections[section].emplace_back(leaf, &value);
    }
    std::ostringstream os;
    for (const auto& [section, entries] : sections) {
        if (!section.empty()) {
            os << "[" << section << "]\n";
        }
        for (const auto& [leaf, value] : entries) {
            os << leaf << " = ";
            std::visit(
                [&os](const auto& v) {
                    using T = std::decay_t<decltype(v)>;
                    if constexpr (std::is_same_v<T, std::string>) {
                        os << quote(v);
                    } else if constexpr (std::is_same_v<T, std::int64_t>) {
                        os << v;
                    } else if constexpr (std::is_same_v<T, double>) {
                        os << format_double(v);
                    } else if constexpr (std::is_same_v<T, bool>) {
                        os << (v ? "true" : "false");
                    } else {
                        os << "[";
                        for (std::size_t i = 0; i < v.size(); ++i) {
                            os << (i ? ", " : "") << quote(v[i]);
                        }
                        os << "]";
                    }
                },
                *value);
            os << "\n";
        }
        os << "\n";
    }
    return os.str();
}

std::string FlatToml::get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        return fallback;
    }
    if (const auto* s = std::get_if<std::string>(&it->second)) {
        return *s;
    }
    throw DataError("config key " + key + " should be a string");
}

std::int64_t FlatToml::get_int(const std::string& key, std::int64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        return fallback;
    }
    if (const auto* v = std::get_if<std::int64_t>(&it->second)) {
        return *v;
    }
    throw DataError("config key " + key + " should be an integer");
}

double FlatToml::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        return fallback;
    }
    if (const auto* v = std::get_if<double>(&it->second)) {
        return *v;
    }
    if (const auto* v = std::get_if<std::int64_t>(&it->second)) {
        return static_cast<double>(*v);
    }
    throw DataError("config key " + key + " should be a number");
}

bool FlatToml::get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        return fallback;
    }
    if (const auto* v = std::get_if<bool>(&it->second)) {
        return *v;
    }
    throw DataError("config key " + key + " should be a boolean");
}

std::vector<std::string> FlatToml::get_strings(const std::string& key,
                                               std::vector<std::string> fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        return fallback;
    }
    if (const auto* v = std::get_if<std::vector<std::string>>(&it->second)) {
        return *v;
    }
    throw DataError("config key " + key + " should be a string array");
}

void FlatToml::apply_env_overrides(const FlatToml& schema) {
    for (char** env = environ; env && *env; ++env) {
        const std::string entry(*env);
        if (entry.rfind("TIMELINER_", 0) != 0) {
            continue;
        }
        const auto eq = entry.find('=');
        if (eq == std::string::npos) {
            continue;
        }
        const std::string name = entry.substr(10, eq - 10);
        const std::string raw = entry.substr(eq + 1);
        for (const auto& [key, proto] : schema.entries()) {
            if (normalize_env_key(key) != name) {
                continue;
            }
            std::visit(
                [&](const auto& v) {
                    using T = std::decay_t<std::remove_cvref_t<decltype(v)>>;
                    if constexpr (std::is_same_v<T, std::string>) {
                        values_[key] = raw;
                    } else if constexpr (std::is_same_v<T, std::int64_t>) {
                        values_[key] = static_cast<std::int64_t>(
                            std::strtoll(raw.c_str(), nullptr, 10));
                    } else if constexpr (std::is_same_v<T, double>) {
                        values_[key] = std::strtod(raw.c_str(), nullptr);
                    } else if constexpr (std::is_same_v<T, bool>) {
                        values_[key] = raw == "true" || raw == "1";
                    } else {
                        // comma-separated list
                        std::vector<std::string> items;
                        std::istringstream ls(raw);
                        std::string cell;
                        while (std::getline(ls, cell, ',')) {
                            items.push_back(cell);
                        }
                        values_[key] = std::move(items);
                    }
                },
                proto);
            break;
        }
    }
}

namespace {

const char* region_key(RegionId r) {
    switch (r) {
        case RegionId::Brow: return "brow";
        case RegionId::Eye: return "eye";
        case RegionId::Mouth: return "mouth";
        case RegionId::Gaze: return "gaze";
        case RegionId::Head: return "head";
    }
    return "brow";
}

void ticc_region_to_toml(FlatToml& doc, const TiccRegionConfig& rc) {
    const std::string p = std::string("ticc.") + region_key(rc.region);
    doc.set(p + ".clusters", static_cast<std::int64_t>(rc.ticc.num_clusters));
    doc.set(p + ".window", static_cast<std::int64_t>(rc.ticc.window));
    doc.set(p + ".beta", rc.ticc.beta);
    doc.set(p + ".lambda", rc.ticc.lambda);
    doc.set(p + ".rho", rc.ticc.rho);
    doc.set(p + ".admm_eps_abs", rc.ticc.admm_eps_abs);
    doc.set(p + ".admm_eps_rel", rc.ticc.admm_eps_rel);
    doc.set(p + ".admm_max_iter", static_cast<std::int64_t>(rc.ticc.admm_max_iter));
    doc.set(p + ".em_max_iter", static_cast<std::int64_t>(rc.ticc.em_max_iter));
    doc.set(p + ".min_cluster_size", static_cast<std::int64_t>(rc.ticc.min_cluster_size));
    doc.set(p + ".cov_ridge", rc.ticc.cov_ridge);
    doc.set(p + ".zscore", rc.ticc.zscore);
    doc.set(p + ".channels", rc.channels);
    std::vector<std::string> candidates;
    for (ActionCategory a : rc.candidates) {
        candidates.emplace_back(action_name(a));
    }
    doc.set(p + ".candidates", candidates);
}

TiccRegionConfig ticc_region_from_toml(const FlatToml& doc, const TiccRegionConfig& base,
                                       std::uint64_t seed) {
    TiccRegionConfig rc = base;
    const std::string p = std::string("ticc.") + region_key(base.region);
    rc.ticc.num_clusters =
        static_cast<int>(doc.get_int(p + ".clusters", base.ticc.num_clusters));
    rc.ticc.window = static_cast<int>(doc.get_int(p + ".window", base.ticc.window));
    rc.ticc.beta = doc.get_double(p + ".beta", base.ticc.beta);
    rc.ticc.lambda = doc.get_double(p + ".lambda", base.ticc.lambda);
    rc.ticc.rho = doc.get_double(p + ".rho", base.ticc.rho);
    rc.ticc.admm_eps_abs = doc.get_double(p + ".admm_eps_abs", base.ticc.admm_eps_abs);
    rc.ticc.admm_eps_rel = doc.get_double(p + ".admm_eps_rel", base.ticc.admm_eps_rel);
    rc.ticc.admm_max_iter =
        static_cast<int>(doc.get_int(p + ".admm_max_iter", base.ticc.admm_max_iter));
    rc.ticc.em_max_iter =
        static_cast<int>(doc.get_int(p + ".em_max_iter", base.ticc.em_max_iter));
    rc.ticc.min_cluster_size =
        static_cast<int>(doc.get_int(p + ".min_cluster_size", base.ticc.min_cluster_size));
    rc.ticc.cov_ridge = doc.get_double(p + ".cov_ridge", base.ticc.cov_ridge);
    rc.ticc.zscore = doc.get_bool(p + ".zscore", base.ticc.zscore);
    rc.ticc.seed = seed;
    rc.channels = doc.get_strings(p + ".channels", base.channels);
    std::vector<std::string> names;
    for (ActionCategory a : base.candidates) {
        names.emplace_back(action_name(a));
    }
    names = doc.get_strings(p + ".candidates", names);
    rc.candidates.clear();
    for (const auto& name : names) {
        const auto a = parse_action(name);
        if (!a) {
            throw DataError("config: unknown action '" + name + "' in " + p + ".candidates");
        }
        rc.candidates.push_back(*a);
    }
    return rc;
}

} // namespace

RunConfig RunConfig::from_toml(const std::string& text, bool apply_env) {
    FlatToml doc = FlatToml::parse(text);
    if (apply_env) {
        doc.apply_env_overrides(FlatToml::parse(RunConfig::defaults().to_toml()));
    }
    RunConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(doc.get_int("seed", 0));
    cfg.manifest = doc.get_string("paths.manifest", cfg.manifest);
    cfg.model_dir = doc.get_string("paths.model_dir", cfg.model_dir);
    cfg.label_dir = doc.get_string("paths.label_dir", cfg.label_dir);
    cfg.output_dir = doc.get_string("paths.output_dir", cfg.output_dir);

    cfg.pipeline.null_len =
        static_cast<int>(doc.get_int("pipeline.null_len", cfg.pipeline.null_len));
    cfg.pipeline.null_value = doc.get_double("pipeline.null_value", cfg.pipeline.null_value);
    for (auto& rc : cfg.pipeline.ticc_regions) {
        rc = ticc_region_from_toml(doc, rc, cfg.seed);
    }
    for (auto& rule : cfg.pipeline.threshold_rules) {
        const std::string p = "thresholds." + std::string(action_name(rule.action));
        rule.channel = doc.get_string(p + ".channel", rule.channel);
        rule.enter_threshold = doc.get_double(p + ".enter", rule.enter_threshold);
        rule.exit_threshold = doc.get_double(p + ".exit", rule.exit_threshold);
        rule.min_duration_frames =
            static_cast<int>(doc.get_int(p + ".min_duration", rule.min_duration_frames));
    }

    cfg.synth.clips = static_cast<int>(doc.get_int("synth.clips", cfg.synth.clips));
    cfg.synth.len_min = static_cast<int>(doc.get_int("synth.len_min", cfg.synth.len_min));
    cfg.synth.len_max = static_cast<int>(doc.get_int("synth.len_max", cfg.synth.len_max));
    cfg.synth.action_rate = doc.get_double("synth.action_rate", cfg.synth.action_rate);
    cfg.synth.sigma_base = doc.get_double("synth.sigma_base", cfg.synth.sigma_base);
    cfg.synth.fps = doc.get_double("synth.fps", cfg.synth.fps);
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path, bool apply_env) {
    std::ifstream is(path);
    if (!is) {
        throw DataError("config file not found: " + path);
    }
    std::ostringstream buf;
    buf << is.rdbuf();
    return from_toml(buf.str(), apply_env);
}

std::string RunConfig::to_toml() const {
    FlatToml doc;
    doc.set("seed", static_cast<std::int64_t>(seed));
    doc.set("paths.manifest", manifest);
    doc.set("paths.model_dir", model_dir);
    doc.set("paths.label_dir", label_dir);
    doc.set("paths.output_dir", output_dir);
    doc.set("pipeline.null_len", static_cast<std::int64_t>(pipeline.null_len));
    doc.set("pipeline.null_value", pipeline.null_value);
    for (const auto& rc : pipeline.ticc_regions) {
        ticc_region_to_toml(doc, rc);
    }
    for (const auto& rule : pipeline.threshold_rules) {
        const std::string p = "thresholds." + std::string(action_name(rule.action));
        doc.set(p + ".channel", rule.channel);
        doc.set(p + ".enter", rule.enter_threshold);
        doc.set(p + ".exit", rule.exit_threshold);
        doc.set(p + ".min_duration", static_cast<std::int64_t>(rule.min_duration_frames));
    }
    doc.set("synth.clips", static_cast<std::int64_t>(synth.clips));
    doc.set("synth.len_min", static_cast<std::int64_t>(synth.len_min));
    doc.set("synth.len_max", static_cast<std::int64_t>(synth.len_max));
    doc.set("synth.action_rate", synth.action_rate);
    doc.set("synth.sigma_base", synth.sigma_base);
    doc.set("synth.fps", synth.fps);
    return doc.dump();
}

std::string RunConfig::hash() const {
    // where outputs land must not change what they contain
    RunConfig keyed = *this;
    keyed.output_dir.clear();
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, fnv1a64(keyed.to_toml()));
    return buf;
}

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace timeliner
