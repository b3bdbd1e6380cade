#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stag/adapter.hpp"
#include "stag/backbone.hpp"
#include "stag/matrix.hpp"
#include "stag/training.hpp"

namespace stag {

// Flat key -> value experiment description. Keys are dotted ("backbone.d",
// "train.lr_max"); unknown keys are rejected, missing keys take the defaults
// below. The effective config round-trips byte-identically.
struct ExperimentConfig {
    BackboneConfig backbone;

    int d_prime = 16;
    int A = -1;  // -1 selects the variant default at build time
    int k = 8;
    RefineFn refine_fn = RefineFn::EfficientEdgeConv;

    TrainConfig train;

    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::uint64_t backbone_seed = 7;
    std::string out_dir = "out";
    bool deterministic = false;
    Precision precision = Precision::Double;

    std::string train_manifest;
    std::string test_manifest;
    std::vector<std::string> classes = {"cube", "cylinder", "sphere", "torus"};
    int per_class_train = 100;
    int per_class_test = 25;
    int points = 256;
    double noise_sigma = 0.02;
};

Precision precision_from_string(const std::string& s);
std::string to_string(Precision p);

ExperimentConfig parse_config(const std::string& json_text, const std::string& origin);
ExperimentConfig load_config(const std::string& path);

// Effective config as sorted flat JSON, one key per line.
std::string dump_config(const ExperimentConfig& cfg);
void save_config(const ExperimentConfig& cfg, const std::string& path);

// The side-network description implied by the strategy; A = -1 resolves to
// the variant default. Non-side strategies still yield a valid descriptor so
// cost reports can quote it.
StagConfig stag_config_of(const ExperimentConfig& cfg);

}  // namespace stag
