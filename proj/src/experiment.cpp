#include "stag/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "stag/error.hpp"

namespace stag {

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    os << text;
    if (!os) throw IoError("write failed: " + path);
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

int parse_int_value(const std::string& s) {
    std::size_t pos = 0;
    int v = 0;
    try {
        v = std::stoi(s, &pos);
    } catch (const std::exception&) {
        throw ConfigError("sweep value is not an integer: " + s);
    }
    if (pos != s.size()) throw ConfigError("sweep value is not an integer: " + s);
    return v;
}

std::string csv_safe(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

}  // namespace

DataSplit prepare_data(const ExperimentConfig& cfg) {
    std::string train_manifest = cfg.train_manifest;
    std::string test_manifest = cfg.test_manifest;
    if (train_manifest.empty() != test_manifest.empty())
        throw ConfigError("set both data.train_manifest and data.test_manifest, or neither");
    if (train_manifest.empty()) {
        const std::string train_dir = cfg.out_dir + "/data/train";
        const std::string test_dir = cfg.out_dir + "/data/test";
        ensure_dir(train_dir);
        ensure_dir(test_dir);
        generate_synthetic(train_dir, cfg.classes, cfg.per_class_train, cfg.points,
                           cfg.noise_sigma, RngStream(cfg.backbone_seed, "dataset/train"));
        generate_synthetic(test_dir, cfg.classes, cfg.per_class_test, cfg.points,
                           cfg.noise_sigma, RngStream(cfg.backbone_seed, "dataset/test"));
        train_manifest = train_dir + "/manifest.tsv";
        test_manifest = test_dir + "/manifest.tsv";
    }
    Dataset train = load_dataset(train_manifest);
    Dataset test = load_dataset(test_manifest);
    if (train.label_names != test.label_names)
        throw DataError("train and test manifests disagree on the label set");
    DataSplit split;
    split.train = std::move(train.clouds);
    split.test = std::move(test.clouds);
    split.label_names = std::move(train.label_names);
    if (split.label_names.size() < 2) throw DataError("need at least two classes");
    return split;
}

std::string metrics_csv(const std::vector<EpochMetrics>& metrics) {
    std::string out = "epoch,lr,train_loss,train_acc,test_acc,epoch_time_s\n";
    char buf[160];
    for (const EpochMetrics& m : metrics) {
        std::snprintf(buf, sizeof buf, "%d,%.8e,%.6f,%.6f,%.6f,%.3f\n", m.epoch, m.lr,
                      m.train_loss, m.train_acc, m.test_acc, m.epoch_time_s);
        out += buf;
    }
    return out;
}

std::string summary_csv(const ExperimentResult& result) {
    std::string out = "seed,final_test_acc\n";
    char buf[80];
    for (const SeedResult& r : result.seeds) {
        std::snprintf(buf, sizeof buf, "%llu,%.6f\n", static_cast<unsigned long long>(r.seed),
                      r.final_test_acc);
        out += buf;
    }
    std::snprintf(buf, sizeof buf, "mean,%.6f\n", result.mean_test_acc);
    out += buf;
    return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    const StagConfig stag = stag_config_of(cfg);
    validate_backbone(cfg.backbone);
    validate_stag(stag);
    ensure_dir(cfg.out_dir);
    save_config(cfg, cfg.out_dir + "/config.json");

    const DataSplit data = prepare_data(cfg);
    const int num_classes = static_cast<int>(data.label_names.size());

    ExperimentResult result;
    double acc_sum = 0.0;
    for (std::uint64_t seed : cfg.seeds) {
        Model model = build_model(cfg.backbone, stag, num_classes, cfg.train.strategy,
                                  cfg.backbone_seed, seed);
        TrainConfig tc = cfg.train;
        tc.seed = seed;
        SeedResult sr;
        sr.seed = seed;
        sr.metrics = finetune(model, data.train, data.test, tc, cfg.deterministic, cfg.precision);
        sr.final_test_acc = sr.metrics.empty()
                                ? evaluate_accuracy(model, data.test, cfg.precision)
                                : sr.metrics.back().test_acc;
        write_text(cfg.out_dir + "/metrics_seed" + std::to_string(seed) + ".csv",
                   metrics_csv(sr.metrics));
        std::vector<std::pair<std::string, Matrix>> records;
        for (const Param& p : model.store.items())
            if (p.tunable) records.emplace_back(p.name, p.value);
        save_params(cfg.out_dir + "/params_seed" + std::to_string(seed) + ".stagw1", records,
                    cfg.precision);
        acc_sum += sr.final_test_acc;
        result.seeds.push_back(std::move(sr));
    }
    result.mean_test_acc = acc_sum / static_cast<double>(result.seeds.size());
    result.cost = cost_report(cfg.backbone, stag, num_classes, cfg.train.strategy, cfg.precision);
    write_text(cfg.out_dir + "/cost.csv", cost_table_csv({result.cost}));
    write_text(cfg.out_dir + "/summary.csv", summary_csv(result));
    return result;
}

std::vector<SweepRow> sweep(const ExperimentConfig& base, const std::string& axis,
                            const std::vector<std::string>& values) {
    if (axis != "A" && axis != "k" && axis != "refine_fn")
        throw ConfigError("unknown sweep axis " + axis + " (expected A, k, or refine_fn)");
    if (base.train.strategy != Strategy::StagStd && base.train.strategy != Strategy::StagSl &&
        base.train.strategy != Strategy::StagCustom)
        throw ConfigError("sweep axis " + axis + " needs a side-tuned strategy");
    if (values.empty()) throw ConfigError("sweep needs at least one value");

    std::vector<SweepRow> rows;
    for (const std::string& value : values) {
        SweepRow row;
        row.value = value;
        try {
            ExperimentConfig cfg = base;
            if (axis == "A") {
                cfg.A = parse_int_value(value);
                cfg.train.strategy = Strategy::StagCustom;  // A is pinned under std and sl
            } else if (axis == "k") {
                cfg.k = parse_int_value(value);
            } else {
                cfg.refine_fn = refine_from_string(value);
            }
            cfg.out_dir = base.out_dir + "/sweep_" + axis + "/" + value;
            const ExperimentResult r = run_experiment(cfg);
            row.ok = true;
            row.mean_test_acc = r.mean_test_acc;
            row.cost = r.cost;
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    ensure_dir(base.out_dir);
    write_text(base.out_dir + "/sweep_" + axis + ".csv", sweep_table_csv(axis, rows));
    return rows;
}

std::string sweep_table_csv(const std::string& axis, const std::vector<SweepRow>& rows) {
    std::string out =
        "axis,value,mean_test_acc,tunable_params,forward_flops,backward_flops,"
        "est_memory_bytes,error\n";
    char buf[240];
    for (const SweepRow& row : rows) {
        if (row.ok) {
            std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%lld,%lld,%lld,%lld,\n", axis.c_str(),
                          row.value.c_str(), row.mean_test_acc,
                          static_cast<long long>(row.cost.tunable_params),
                          static_cast<long long>(row.cost.forward_flops),
                          static_cast<long long>(row.cost.backward_flops),
                          static_cast<long long>(row.cost.est_memory_bytes));
            out += buf;
        } else {
            out += axis + "," + row.value + ",,,,," + "," + csv_safe(row.error) + "\n";
        }
    }
    return out;
}

std::string sweep_table_text(const std::string& axis, const std::vector<SweepRow>& rows) {
    std::string out;
    char buf[240];
    std::snprintf(buf, sizeof buf, "%-10s %-20s %-14s %-14s %-16s %-16s %-16s\n", axis.c_str(),
                  "value", "mean_test_acc", "tunable_params", "forward_flops", "backward_flops",
                  "est_memory_bytes");
    out += buf;
    for (const SweepRow& row : rows) {
        if (row.ok) {
            std::snprintf(buf, sizeof buf, "%-10s %-20s %-14.6f %-14lld %-16lld %-16lld %-16lld\n",
                          axis.c_str(), row.value.c_str(), row.mean_test_acc,
                          static_cast<long long>(row.cost.tunable_params),
                          static_cast<long long>(row.cost.forward_flops),
                          static_cast<long long>(row.cost.backward_flops),
                          static_cast<long long>(row.cost.est_memory_bytes));
        } else {
            std::snprintf(buf, sizeof buf, "%-10s %-20s error: %s\n", axis.c_str(),
                          row.value.c_str(), row.error.c_str());
        }
        out += buf;
    }
    return out;
}

}  // namespace stag
