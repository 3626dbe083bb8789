#pragma once

// Run configuration: a flat `key = value` file plus flag overrides.

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "gan.hpp"
#include "nn.hpp"

namespace layoutforge {

struct RunConfig {
    std::optional<std::uint64_t> seed;
    std::string dataset = "dataset.json";
    std::string out_dir = ".";
    ModelConfig model{};
    int epochs = 200;
    int checkpoint_every = 0;  // epochs; 0 = final checkpoint only
    std::optional<std::uint64_t> split_seed;
    double train_fraction = 0.9;

    std::uint64_t root_seed() const { return seed.value_or(0); }
    std::uint64_t effective_split_seed() const { return split_seed.value_or(root_seed()); }

    /// Paths are resolved against out_dir unless absolute.
    std::string resolve(const std::string& path) const { return (std::filesystem::path(out_dir) / path).string(); }

    void set(const std::string& key, const std::string& value);
    void validate() const;

    static const std::vector<std::string>& keys();
};

namespace detail {

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::string unquote(std::string s) {
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\'')))
        return s.substr(1, s.size() - 2);
    return s;
}

inline double parse_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end || !std::isfinite(out))
        throw ConfigError("config key '" + key + "': '" + v + "' is not a finite number");
    return out;
}

inline long long parse_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
    return out;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) throw ConfigError("config key '" + key + "': '" + v + "' is not an unsigned integer");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(parse_double(key, item));
    }
    return out;
}

inline void check_range(const std::string& key, double v, double lo, double hi) {
    if (v < lo || v > hi)
        throw ConfigError("config key '" + key + "' = " + std::to_string(v) + " is outside [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + "]");
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

inline DimensionTable& table_for(RunConfig& c, RoomType t) {
    return c.model.labels.tables[static_cast<std::size_t>(t)];
}

inline const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> m = [] {
        std::map<std::string, Setter> s;
        s["seed"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_u64(k, v); };
        s["dataset"] = [](RunConfig& c, const std::string&, const std::string& v) { c.dataset = v; };
        s["out_dir"] = [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; };
        s["resolution"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            const auto r = parse_int(k, v);
            check_range(k, static_cast<double>(r), 4, 256);
            c.model.resolution = static_cast<int>(r);
        };
        s["latent_dim"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            const auto z = parse_int(k, v);
            check_range(k, static_cast<double>(z), static_cast<double>(c.model.graph_latent), 4096);
            c.model.latent_dim = static_cast<std::size_t>(z);
        };
        s["slots"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            const auto n = parse_int(k, v);
            check_range(k, static_cast<double>(n), 1, 64);
            c.model.slots = static_cast<std::size_t>(n);
        };
        for (int i = 0; i < 3; ++i)
            s["lambda_adv" + std::to_string(i + 1)] = [i](RunConfig& c, const std::string& k, const std::string& v) {
                const double l = parse_double(k, v);
                check_range(k, l, 0.0, 100.0);
                c.model.lambda_adv[static_cast<std::size_t>(i)] = l;
            };
        s["lambda_adv"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            const double l = parse_double(k, v);
            check_range(k, l, 0.0, 100.0);
            c.model.lambda_adv = {l, l, l};
        };
        s["metric"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            try {
                c.model.metric = ad::metric_from_string(v);
            } catch (const ConfigError& e) {
                throw ConfigError("config key '" + k + "': " + e.what());
            }
        };
        s["optimizer"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            if (v == "adam") c.model.optimizer = nn::OptimizerKind::Adam;
            else if (v == "sgd") c.model.optimizer = nn::OptimizerKind::SGD;
            else throw ConfigError("config key '" + k + "' must be 'adam' or 'sgd'");
        };
        s["learning_rate"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            const double lr = parse_double(k, v);
            if (!(lr > 0 && lr <= 1)) throw ConfigError("config key '" + k + "' must lie in (0, 1]");
            c.model.learning_rate = lr;
        };
        s["epochs"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            const auto e = parse_int(k, v);
            check_range(k, static_cast<double>(e), 0, 1e6);
            c.epochs = static_cast<int>(e);
        };
        s["checkpoint_every"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            const auto e = parse_int(k, v);
            check_range(k, static_cast<double>(e), 0, 1e6);
            c.checkpoint_every = static_cast<int>(e);
        };
        s["detach_stages"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.model.detach_stages = parse_bool(k, v); };
        s["condition_discriminators"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.condition_discriminators = parse_bool(k, v);
        };
        s["split_seed"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.split_seed = parse_u64(k, v); };
        s["train_fraction"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            const double f = parse_double(k, v);
            if (!(f > 0 && f < 1)) throw ConfigError("config key '" + k + "' must lie in (0, 1)");
            c.train_fraction = f;
        };
        s["governing_side"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            if (v == "shorter") c.model.labels.governing = GoverningSide::Shorter;
            else if (v == "longer") c.model.labels.governing = GoverningSide::Longer;
            else throw ConfigError("config key '" + k + "' must be 'shorter' or 'longer'");
        };
        for (auto t : kRoomTypes) {
            const std::string name(to_string(t));
            s[name + "_thresholds"] = [t](RunConfig& c, const std::string& k, const std::string& v) {
                table_for(c, t).thresholds = parse_list(k, v);
            };
            s[name + "_range"] = [t](RunConfig& c, const std::string& k, const std::string& v) {
                const auto r = parse_list(k, v);
                if (r.size() != 2) throw ConfigError("config key '" + k + "' needs two values: min,max");
                table_for(c, t).min_length = r[0];
                table_for(c, t).max_length = r[1];
            };
        }
        return s;
    }();
    return m;
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
    const auto& s = detail::setters();
    auto it = s.find(key);
    if (it == s.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(*this, key, detail::trim(value));
}

inline void RunConfig::validate() const { model.validate(); }

inline const std::vector<std::string>& RunConfig::keys() {
    static const std::vector<std::string> k = [] {
        std::vector<std::string> out;
        for (const auto& [name, _] : detail::setters()) out.push_back(name);
        return out;
    }();
    return k;
}

/// Applies a config file's text. Blank lines and `#` comments are skipped;
/// sections are not supported.
inline void apply_config_text(RunConfig& c, const std::string& text) {
    std::stringstream ss(text);
    std::string line;
    int n = 0;
    while (std::getline(ss, line)) {
        ++n;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(n) + ": expected 'key = value', got '" + line + "'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::unquote(detail::trim(line.substr(eq + 1)));
        try {
            c.set(key, value);
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(n) + ": " + e.what());
        }
    }
}

inline void apply_config_file(RunConfig& c, const std::string& path) {
    std::string text;
    try {
        text = nn::read_file(path);
    } catch (const DataError& e) {
        throw ConfigError(std::string("cannot read config file: ") + e.what());
    }
    apply_config_text(c, text);
}

/// Root seed from LAYOUTFORGE_SEED when neither file nor flags set one.
inline void apply_seed_env(RunConfig& c) {
    if (c.seed) return;
    if (const char* env = std::getenv("LAYOUTFORGE_SEED"); env && *env) c.seed = detail::parse_u64("LAYOUTFORGE_SEED", env);
}

}  // namespace layoutforge
