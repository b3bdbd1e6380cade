#include "stag/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

#include "stag/error.hpp"

namespace stag {

namespace {

using json = nlohmann::json;

long long require_int(const json& v, const std::string& key) {
    if (!v.is_number_integer())
        throw ConfigError("config key " + key + " must be an integer");
    return v.get<long long>();
}

double require_real(const json& v, const std::string& key) {
    if (!v.is_number())
        throw ConfigError("config key " + key + " must be a number");
    return v.get<double>();
}

std::string require_string(const json& v, const std::string& key) {
    if (!v.is_string())
        throw ConfigError("config key " + key + " must be a string");
    return v.get<std::string>();
}

bool require_bool(const json& v, const std::string& key) {
    if (!v.is_boolean())
        throw ConfigError("config key " + key + " must be a boolean");
    return v.get<bool>();
}

}  // namespace

Precision precision_from_string(const std::string& s) {
    if (s == "single") return Precision::Single;
    if (s == "double") return Precision::Double;
    throw ConfigError("unknown precision " + s + " (expected single or double)");
}

std::string to_string(Precision p) {
    return p == Precision::Single ? "single" : "double";
}

ExperimentConfig parse_config(const std::string& json_text, const std::string& origin) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ParseError(origin + ": " + e.what());
    }
    if (!root.is_object()) throw ConfigError(origin + ": config must be a JSON object");

    ExperimentConfig cfg;
    for (const auto& [key, v] : root.items()) {
        if (key == "backbone.d") cfg.backbone.d = static_cast<int>(require_int(v, key));
        else if (key == "backbone.L") cfg.backbone.L = static_cast<int>(require_int(v, key));
        else if (key == "backbone.n") cfg.backbone.n = static_cast<int>(require_int(v, key));
        else if (key == "backbone.heads") cfg.backbone.heads = static_cast<int>(require_int(v, key));
        else if (key == "backbone.mlp_ratio") cfg.backbone.mlp_ratio = static_cast<int>(require_int(v, key));
        else if (key == "backbone.group_size") cfg.backbone.group_size = static_cast<int>(require_int(v, key));
        else if (key == "stag.d_prime") cfg.d_prime = static_cast<int>(require_int(v, key));
        else if (key == "stag.A") cfg.A = static_cast<int>(require_int(v, key));
        else if (key == "stag.k") cfg.k = static_cast<int>(require_int(v, key));
        else if (key == "stag.refine_fn") cfg.refine_fn = refine_from_string(require_string(v, key));
        else if (key == "train.strategy") cfg.train.strategy = strategy_from_string(require_string(v, key));
        else if (key == "train.epochs") cfg.train.epochs = static_cast<int>(require_int(v, key));
        else if (key == "train.batch_size") cfg.train.batch_size = static_cast<int>(require_int(v, key));
        else if (key == "train.lr_max") cfg.train.lr_max = require_real(v, key);
        else if (key == "train.lr_min") cfg.train.lr_min = require_real(v, key);
        else if (key == "train.weight_decay") cfg.train.weight_decay = require_real(v, key);
        else if (key == "run.seeds") {
            if (!v.is_array() || v.empty())
                throw ConfigError("config key run.seeds must be a non-empty array");
            cfg.seeds.clear();
            for (const auto& s : v)
                cfg.seeds.push_back(static_cast<std::uint64_t>(require_int(s, key)));
        } else if (key == "run.backbone_seed") cfg.backbone_seed = static_cast<std::uint64_t>(require_int(v, key));
        else if (key == "run.out_dir") cfg.out_dir = require_string(v, key);
        else if (key == "run.deterministic") cfg.deterministic = require_bool(v, key);
        else if (key == "run.precision") cfg.precision = precision_from_string(require_string(v, key));
        else if (key == "data.train_manifest") cfg.train_manifest = require_string(v, key);
        else if (key == "data.test_manifest") cfg.test_manifest = require_string(v, key);
        else if (key == "data.classes") {
            if (!v.is_array() || v.empty())
                throw ConfigError("config key data.classes must be a non-empty array");
            cfg.classes.clear();
            for (const auto& c : v) cfg.classes.push_back(require_string(c, key));
        } else if (key == "data.per_class_train") cfg.per_class_train = static_cast<int>(require_int(v, key));
        else if (key == "data.per_class_test") cfg.per_class_test = static_cast<int>(require_int(v, key));
        else if (key == "data.points") cfg.points = static_cast<int>(require_int(v, key));
        else if (key == "data.noise_sigma") cfg.noise_sigma = require_real(v, key);
        else throw ConfigError(origin + ": unknown config key " + key);
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open config: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str(), path);
}

std::string dump_config(const ExperimentConfig& cfg) {
    json root;  // nlohmann keeps keys sorted
    root["backbone.d"] = cfg.backbone.d;
    root["backbone.L"] = cfg.backbone.L;
    root["backbone.n"] = cfg.backbone.n;
    root["backbone.heads"] = cfg.backbone.heads;
    root["backbone.mlp_ratio"] = cfg.backbone.mlp_ratio;
    root["backbone.group_size"] = cfg.backbone.group_size;
    root["stag.d_prime"] = cfg.d_prime;
    root["stag.A"] = cfg.A;
    root["stag.k"] = cfg.k;
    root["stag.refine_fn"] = to_string(cfg.refine_fn);
    root["train.strategy"] = to_string(cfg.train.strategy);
    root["train.epochs"] = cfg.train.epochs;
    root["train.batch_size"] = cfg.train.batch_size;
    root["train.lr_max"] = cfg.train.lr_max;
    root["train.lr_min"] = cfg.train.lr_min;
    root["train.weight_decay"] = cfg.train.weight_decay;
    root["run.seeds"] = cfg.seeds;
    root["run.backbone_seed"] = cfg.backbone_seed;
    root["run.out_dir"] = cfg.out_dir;
    root["run.deterministic"] = cfg.deterministic;
    root["run.precision"] = to_string(cfg.precision);
    root["data.train_manifest"] = cfg.train_manifest;
    root["data.test_manifest"] = cfg.test_manifest;
    root["data.classes"] = cfg.classes;
    root["data.per_class_train"] = cfg.per_class_train;
    root["data.per_class_test"] = cfg.per_class_test;
    root["data.points"] = cfg.points;
    root["data.noise_sigma"] = cfg.noise_sigma;
    return root.dump(2) + "\n";
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write config: " + path);
    os << dump_config(cfg);
    if (!os) throw IoError("config write failed: " + path);
}

StagConfig stag_config_of(const ExperimentConfig& cfg) {
    StagConfig sc;
    sc.d = cfg.backbone.d;
    sc.d_prime = cfg.d_prime;
    sc.L = cfg.backbone.L;
    sc.k = cfg.k;
    sc.refine_fn = cfg.refine_fn;
    switch (cfg.train.strategy) {
        case Strategy::StagSl: sc.variant = Variant::Sl; break;
        case Strategy::StagCustom: sc.variant = Variant::Custom; break;
        default: sc.variant = Variant::Std; break;
    }
    sc.A = cfg.A >= 0 ? cfg.A : default_A(sc.variant, sc.L);
    sc.sharing = make_sharing(sc.variant, sc.L, sc.A);
    return sc;
}

}  // namespace stag
