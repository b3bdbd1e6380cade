#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stag/accounting.hpp"
#include "stag/config.hpp"
#include "stag/dataset.hpp"
#include "stag/training.hpp"

namespace stag {

struct DataSplit {
    std::vector<PointCloud> train;
    std::vector<PointCloud> test;
    std::vector<std::string> label_names;
};

// Loads the configured manifests; when none are set, generates the synthetic
// splits under out_dir/data first. Train and test must share one label map.
DataSplit prepare_data(const ExperimentConfig& cfg);

struct SeedResult {
    std::uint64_t seed = 0;
    std::vector<EpochMetrics> metrics;
    double final_test_acc = 0.0;
};

struct ExperimentResult {
    std::vector<SeedResult> seeds;
    double mean_test_acc = 0.0;
    CostReport cost;
};

std::string metrics_csv(const std::vector<EpochMetrics>& metrics);
std::string summary_csv(const ExperimentResult& result);

// One fine-tuning run per seed. Writes, under cfg.out_dir: the effective
// config, per-seed metrics CSVs, trained tunable weights, a cost table for
// the strategy, and an accuracy summary. epochs = 0 reports the init-state
// test accuracy.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

struct SweepRow {
    std::string value;
    bool ok = false;
    std::string error;
    double mean_test_acc = 0.0;
    CostReport cost;
};

// Reruns the experiment once per axis value (axis is one of A, k,
// refine_fn). A row whose value violates an invariant is reported as an
// error and the sweep continues. Varying A needs per-value sharing maps, so
// the strategy is run as stag_custom for that axis.
std::vector<SweepRow> sweep(const ExperimentConfig& base, const std::string& axis,
                            const std::vector<std::string>& values);

std::string sweep_table_csv(const std::string& axis, const std::vector<SweepRow>& rows);
std::string sweep_table_text(const std::string& axis, const std::vector<SweepRow>& rows);

}  // namespace stag
