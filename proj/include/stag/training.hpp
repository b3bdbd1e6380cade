#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stag/adapter.hpp"
#include "stag/backbone.hpp"
#include "stag/geometry.hpp"
#include "stag/params.hpp"
#include "stag/tape.hpp"

namespace stag {

enum class Strategy { Full, HeadOnly, StagStd, StagSl, StagCustom };

Strategy strategy_from_string(const std::string& s);
std::string to_string(Strategy s);

struct TrainConfig {
    Strategy strategy = Strategy::StagStd;
    int epochs = 100;
    int batch_size = 16;
    double lr_max = 5e-4;
    double lr_min = 1e-6;
    double weight_decay = 0.05;
    std::uint64_t seed = 1;
};

// lr(t) = lr_min + (lr_max - lr_min)(1 + cos(pi t / T)) / 2 on 0 <= t <= T,
// with the endpoints returned exactly.
double cosine_lr(int t, int T, double lr_max, double lr_min);

// Decoupled weight decay Adam, beta = (0.9, 0.999), eps = 1e-8.
class AdamW {
public:
    void step(ParamStore& store, const std::vector<std::string>& tunable_names,
              const std::map<std::string, Matrix>& grads, double lr, double weight_decay);
    int steps_taken() const { return t_; }

private:
    struct Slot {
        Matrix m;
        Matrix v;
    };
    std::map<std::string, Slot> state_;
    int t_ = 0;
};

// Three-layer head over pooled tokens: 2d -> 256 -> 256 -> C.
void add_head_params(ParamStore& store, int d, int num_classes, RngStream& rng);
std::int64_t count_head_params(int d, int num_classes);

// pooled = concat(column max, column mean) of T^L; dropout masks (entries 0
// or 2, rate 0.5 inverted) are applied after each hidden activation during
// training and must be null at evaluation time.
NodeId head_forward(Tape& tape, Binding& bind, NodeId t_final, const Matrix* drop1,
                    const Matrix* drop2);

struct Model {
    BackboneConfig bb;
    StagConfig stag;
    int num_classes = 4;
    bool use_side = false;
    ParamStore store;
};

// Backbone params come from backbone_seed (one frozen network shared across
// run seeds); head and side init come from run_seed. Tunable set by strategy:
// full = backbone + head, head_only = head, stag_* = side + head.
Model build_model(const BackboneConfig& bb, const StagConfig& stag, int num_classes,
                  Strategy strategy, std::uint64_t backbone_seed, std::uint64_t run_seed);

// FPS centers, grouped local patches, and (for side-tuned models) the
// neighbor graph for one cloud.
struct SamplePipeline {
    std::vector<Matrix> groups;
    Matrix centers;
    NeighborGraph graph;
    int label = -1;
};

SamplePipeline prepare_sample(const PointCloud& cloud, const Model& model, RngStream* fps_rng,
                              bool deterministic);

NodeId forward_logits(Tape& tape, Binding& bind, const Model& model, const SamplePipeline& s,
                      const Matrix* drop1, const Matrix* drop2);

struct EpochMetrics {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
    double epoch_time_s = 0.0;
};

// One sequential fine-tuning run. Deterministic mode fixes FPS seeding and
// reports epoch_time_s as zero so metrics are byte-reproducible.
std::vector<EpochMetrics> finetune(Model& model, const std::vector<PointCloud>& train,
                                   const std::vector<PointCloud>& test, const TrainConfig& tc,
                                   bool deterministic, Precision prec);

double evaluate_accuracy(Model& model, const std::vector<PointCloud>& test, Precision prec);

}  // namespace stag
