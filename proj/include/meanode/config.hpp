#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "meanode/resnet.hpp"

namespace meanode {

using json = nlohmann::json;

// One trainable run described by a flat JSON document whose keys mirror the
// TrainConfig fields one-to-one, plus the dataset size and seed.
struct RunSpec {
    TrainConfig train;
    int n = 0;
    std::uint64_t data_seed = 1009;  // fixed default so repetitions share data

    Dataset dataset() const { return make_dataset(train.d, train.tokens, n, data_seed); }
};

inline json to_json(const TrainConfig& cfg) {
    json j;
    j["block"] = to_string(cfg.block.family);
    j["rho"] = to_string(cfg.block.act);
    if (cfg.block.family == BlockFamily::attention) j["dk"] = cfg.block.key_dim;
    j["d"] = cfg.d;
    j["tokens"] = cfg.tokens;
    j["l"] = cfg.layers;
    j["m"] = cfg.units;
    j["alpha"] = cfg.alpha;
    j["steps"] = cfg.steps;
    j["eta_u"] = cfg.eta_u;
    j["eta_v"] = cfg.eta_v;
    j["sigma_u"] = cfg.scales.sigma_u;
    j["sigma_v"] = cfg.scales.sigma_v;
    j["seed"] = cfg.seed;
    j["snapshots"] = cfg.snapshots;
    if (cfg.tie_first_unit) j["tie_first_unit"] = true;
    return j;
}

inline json to_json(const RunSpec& spec) {
    json j = to_json(spec.train);
    j["n"] = spec.n;
    j["data_seed"] = spec.data_seed;
    return j;
}

namespace detail {

inline const json& require_key(const json& j, const std::string& key) {
    if (!j.contains(key)) throw ConfigError(key, "missing required key");
    return j.at(key);
}

inline double get_number(const json& j, const std::string& key) {
    const json& v = require_key(j, key);
    if (!v.is_number()) throw ConfigError(key, "expected a number");
    return v.get<double>();
}

inline int get_int(const json& j, const std::string& key) {
    const json& v = require_key(j, key);
    if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
    return v.get<int>();
}

inline int get_int_or(const json& j, const std::string& key, int dflt) {
    if (!j.contains(key)) return dflt;
    if (!j.at(key).is_number_integer()) throw ConfigError(key, "expected an integer");
    return j.at(key).get<int>();
}

inline std::uint64_t get_u64(const json& j, const std::string& key) {
    const json& v = require_key(j, key);
    if (!v.is_number_unsigned() && !v.is_number_integer())
        throw ConfigError(key, "expected an unsigned integer");
    auto s = v.get<std::int64_t>();
    if (v.is_number_integer() && !v.is_number_unsigned() && s < 0)
        throw ConfigError(key, "expected an unsigned integer");
    return v.get<std::uint64_t>();
}

inline std::string get_string_or(const json& j, const std::string& key, const std::string& dflt) {
    if (!j.contains(key)) return dflt;
    if (!j.at(key).is_string()) throw ConfigError(key, "expected a string");
    return j.at(key).get<std::string>();
}

inline void reject_unknown(const json& j, const std::set<std::string>& allowed) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError(it.key(), "unknown key");
}

inline const std::set<std::string>& run_spec_keys() {
    static const std::set<std::string> keys = {
        "block", "rho",     "dk",      "d",       "tokens",  "l",
        "m",     "alpha",   "steps",   "eta_u",   "eta_v",   "sigma_u",
        "sigma_v", "seed",  "snapshots", "tie_first_unit", "n", "data_seed", "loss"};
    return keys;
}

}  // namespace detail

// Parses and fully validates a run config; throws ConfigError naming the
// offending key before any compute starts. `extra_allowed` lets callers embed
// additional command-specific keys in the same flat document.
inline RunSpec run_spec_from_json(const json& j,
                                  const std::set<std::string>& extra_allowed = {}) {
    if (!j.is_object()) throw ConfigError("(root)", "config must be a JSON object");
    std::set<std::string> allowed = detail::run_spec_keys();
    allowed.insert(extra_allowed.begin(), extra_allowed.end());
    detail::reject_unknown(j, allowed);

    RunSpec spec;
    TrainConfig& cfg = spec.train;

    std::string fam = detail::get_string_or(j, "block", "2lp");
    cfg.block.family = block_family_from_string(fam);
    std::string act = detail::get_string_or(j, "rho", "tanh");
    try {
        cfg.block.act = activation_from_string(act);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("rho", e.what());
    }
    cfg.block.key_dim =
        cfg.block.family == BlockFamily::attention ? detail::get_int_or(j, "dk", 4) : 0;

    cfg.d = detail::get_int(j, "d");
    cfg.tokens = detail::get_int_or(j, "tokens", 1);
    cfg.layers = detail::get_int(j, "l");
    cfg.units = detail::get_int(j, "m");
    cfg.alpha = detail::get_number(j, "alpha");
    cfg.steps = detail::get_int(j, "steps");
    cfg.eta_u = detail::get_number(j, "eta_u");
    cfg.eta_v = detail::get_number(j, "eta_v");
    cfg.scales.sigma_u = detail::get_number(j, "sigma_u");
    cfg.scales.sigma_v = detail::get_number(j, "sigma_v");
    cfg.seed = detail::get_u64(j, "seed");
    if (j.contains("snapshots")) {
        if (!j.at("snapshots").is_array()) throw ConfigError("snapshots", "expected an array");
        for (const auto& v : j.at("snapshots")) {
            if (!v.is_number_integer()) throw ConfigError("snapshots", "expected integers");
            cfg.snapshots.push_back(v.get<int>());
        }
    }
    if (j.contains("tie_first_unit")) {
        if (!j.at("tie_first_unit").is_boolean())
            throw ConfigError("tie_first_unit", "expected a boolean");
        cfg.tie_first_unit = j.at("tie_first_unit").get<bool>();
    }
    std::string loss = detail::get_string_or(j, "loss", "scaled_mse");
    if (loss != "scaled_mse") throw ConfigError("loss", "unknown loss kind: " + loss);

    spec.n = detail::get_int(j, "n");
    if (spec.n < 1) throw ConfigError("n", "must be >= 1");
    if (j.contains("data_seed")) spec.data_seed = detail::get_u64(j, "data_seed");

    cfg.validate();
    return spec;
}

}  // namespace meanode
