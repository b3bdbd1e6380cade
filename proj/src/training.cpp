#include "stag/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "stag/error.hpp"

namespace stag {

Strategy strategy_from_string(const std::string& s) {
    if (s == "full") return Strategy::Full;
    if (s == "head_only") return Strategy::HeadOnly;
    if (s == "stag_std") return Strategy::StagStd;
    if (s == "stag_sl") return Strategy::StagSl;
    if (s == "stag_custom") return Strategy::StagCustom;
    throw ConfigError("unknown strategy: " + s);
}

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::Full: return "full";
        case Strategy::HeadOnly: return "head_only";
        case Strategy::StagStd: return "stag_std";
        case Strategy::StagSl: return "stag_sl";
        case Strategy::StagCustom: return "stag_custom";
    }
    return "?";
}

double cosine_lr(int t, int T, double lr_max, double lr_min) {
    if (T < 0) throw ContractError("cosine_lr: T must be >= 0");
    if (t < 0 || t > T) throw ContractError("cosine_lr: epoch outside schedule");
    if (t == 0) return lr_max;
    if (t == T) return lr_min;
    const double c = std::cos(M_PI * static_cast<double>(t) / static_cast<double>(T));
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + c);
}

void AdamW::step(ParamStore& store, const std::vector<std::string>& tunable_names,
                 const std::map<std::string, Matrix>& grads, double lr, double weight_decay) {
    ++t_;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(b1, t_);
    const double bc2 = 1.0 - std::pow(b2, t_);
    for (const std::string& name : tunable_names) {
        Param& p = store.at(name);
        if (!p.tunable) throw OptimizerError("adamw_step: parameter is frozen: " + name);
        auto git = grads.find(name);
        if (git == grads.end())
            throw OptimizerError("adamw_step: missing gradient for tunable parameter " + name);
        const Matrix& g = git->second;
        if (!g.same_shape(p.value))
            throw DimensionError("adamw_step: gradient shape mismatch for " + name);
        Slot& s = state_[name];
        if (s.m.empty()) {
            s.m = Matrix(p.value.rows(), p.value.cols(), p.value.precision());
            s.v = Matrix(p.value.rows(), p.value.cols(), p.value.precision());
        }
        for (int i = 0; i < p.value.rows(); ++i)
            for (int j = 0; j < p.value.cols(); ++j) {
                const double gij = g.at(i, j);
                s.m.at(i, j) = b1 * s.m.at(i, j) + (1.0 - b1) * gij;
                s.v.at(i, j) = b2 * s.v.at(i, j) + (1.0 - b2) * gij * gij;
                const double mhat = s.m.at(i, j) / bc1;
                const double vhat = s.v.at(i, j) / bc2;
                p.value.at(i, j) -= lr * (mhat / (std::sqrt(vhat) + eps) +
                                          weight_decay * p.value.at(i, j));
            }
        s.m.apply_precision();
        s.v.apply_precision();
        p.value.apply_precision();
    }
}

void add_head_params(ParamStore& store, int d, int num_classes, RngStream& rng) {
    if (num_classes < 2) throw ConfigError("head: need at least 2 classes");
    const int hidden = 256;
    auto fan_uniform = [&rng](int rows, int cols) {
        const double s = 1.0 / std::sqrt(static_cast<double>(rows));
        return Matrix::uniform(rng, rows, cols, -s, s);
    };
    store.add("head/l1_w", fan_uniform(2 * d, hidden), true);
    store.add("head/l1_b", Matrix(1, hidden), true);
    store.add("head/l2_w", fan_uniform(hidden, hidden), true);
    store.add("head/l2_b", Matrix(1, hidden), true);
    store.add("head/l3_w", fan_uniform(hidden, num_classes), true);
    store.add("head/l3_b", Matrix(1, num_classes), true);
}

std::int64_t count_head_params(int d, int num_classes) {
    const std::int64_t h = 256;
    return (2LL * d * h + h) + (h * h + h) + (h * num_classes + num_classes);
}

NodeId head_forward(Tape& tape, Binding& bind, NodeId t_final, const Matrix* drop1,
                    const Matrix* drop2) {
    Tape::Scope scope(tape, "head");
    const NodeId pooled =
        tape.concat_cols(tape.row_max_pool(t_final), tape.row_mean_pool(t_final));
    NodeId h = tape.leaky_relu(tape.linear(pooled, bind("head/l1_w"), bind("head/l1_b")));
    if (drop1) h = tape.mul(h, tape.input(*drop1));
    h = tape.leaky_relu(tape.linear(h, bind("head/l2_w"), bind("head/l2_b")));
    if (drop2) h = tape.mul(h, tape.input(*drop2));
    return tape.linear(h, bind("head/l3_w"), bind("head/l3_b"));
}

Model build_model(const BackboneConfig& bb, const StagConfig& stag, int num_classes,
                  Strategy strategy, std::uint64_t backbone_seed, std::uint64_t run_seed) {
    validate_backbone(bb);
    Model model;
    model.bb = bb;
    model.stag = stag;
    model.num_classes = num_classes;
    model.use_side = strategy == Strategy::StagStd || strategy == Strategy::StagSl ||
                     strategy == Strategy::StagCustom;
    if (strategy == Strategy::StagStd && stag.variant != Variant::Std)
        throw ConfigError("strategy stag_std requires variant std");
    if (strategy == Strategy::StagSl && stag.variant != Variant::Sl)
        throw ConfigError("strategy stag_sl requires variant sl");
    if (strategy == Strategy::StagCustom && stag.variant != Variant::Custom)
        throw ConfigError("strategy stag_custom requires variant custom");
    RngStream bb_rng(backbone_seed, "backbone/init");
    add_backbone_params(model.store, bb, bb_rng, strategy == Strategy::Full);
    if (model.use_side) {
        if (stag.d != bb.d || stag.L != bb.L)
            throw ConfigError("side and backbone configs disagree on d or L");
        RngStream side_rng(run_seed, "side/init");
        add_side_params(model.store, model.stag, side_rng);
    }
    RngStream head_rng(run_seed, "head/init");
    add_head_params(model.store, bb.d, num_classes, head_rng);
    return model;
}

SamplePipeline prepare_sample(const PointCloud& cloud, const Model& model, RngStream* fps_rng,
                              bool deterministic) {
    if (cloud.points.rows() < model.bb.group_size)
        throw DataError("sample has fewer points than group_size: " + cloud.source_id);
    SamplePipeline s;
    RngStream fallback(0, "fps/unused");
    RngStream& rng = fps_rng ? *fps_rng : fallback;
    const PatchCenters centers =
        farthest_point_sample(cloud.points, model.bb.n, rng, deterministic || !fps_rng);
    s.groups = knn_group(cloud.points, centers, model.bb.group_size);
    s.centers = centers.centers;
    if (model.use_side) s.graph = knn_graph(centers, model.stag.k);
    s.label = cloud.label;
    return s;
}

NodeId forward_logits(Tape& tape, Binding& bind, const Model& model, const SamplePipeline& s,
                      const Matrix* drop1, const Matrix* drop2) {
    const NodeId t_final =
        model.use_side
            ? stag_forward(tape, bind, model.bb, model.stag, s.groups, s.centers, s.graph)
            : backbone_forward(tape, bind, model.bb, s.groups, s.centers);
    return head_forward(tape, bind, t_final, drop1, drop2);
}

namespace {

int argmax_row(const Matrix& m) {
    int best = 0;
    for (int j = 1; j < m.cols(); ++j)
        if (m.at(0, j) > m.at(0, best)) best = j;
    return best;
}

Matrix dropout_mask(RngStream& rng, int cols) {
    Matrix m(1, cols);
    for (int j = 0; j < cols; ++j) m.at(0, j) = rng.uniform() < 0.5 ? 0.0 : 2.0;
    return m;
}

}  // namespace

std::vector<EpochMetrics> finetune(Model& model, const std::vector<PointCloud>& train,
                                   const std::vector<PointCloud>& test, const TrainConfig& tc,
                                   bool deterministic, Precision prec) {
    if (train.empty() || test.empty()) throw DataError("finetune: empty dataset");
    if (tc.batch_size < 1) throw ConfigError("finetune: batch_size must be >= 1");
    const std::vector<std::string> tunable = model.store.tunable_names();
    if (tunable.empty()) throw ConfigError("finetune: strategy has no tunable parameters");

    // Test clouds are fixed and test-time FPS is deterministic, so their
    // pipelines can be prepared once.
    std::vector<SamplePipeline> test_pipes;
    test_pipes.reserve(test.size());
    for (const PointCloud& c : test) test_pipes.push_back(prepare_sample(c, model, nullptr, true));

    AdamW opt;
    std::vector<EpochMetrics> metrics;
    const int T = tc.epochs - 1;
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = cosine_lr(epoch, std::max(T, 0), tc.lr_max, tc.lr_min);
        const std::string etag = "/e" + std::to_string(epoch);

        std::vector<int> order(train.size());
        std::iota(order.begin(), order.end(), 0);
        RngStream shuffle_rng(tc.seed, "shuffle" + etag);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);

        double loss_sum = 0.0;
        int correct = 0;
        for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
            const std::size_t stop = std::min(order.size(), start + tc.batch_size);
            Tape tape(prec);
            Binding bind(tape, model.store);
            NodeId batch_loss = kNoNode;
            for (std::size_t b = start; b < stop; ++b) {
                const int idx = order[b];
                const std::string stag_tag = etag + "/i" + std::to_string(idx);
                RngStream aug_rng(tc.seed, "augment" + stag_tag);
                RngStream fps_rng(tc.seed, "fps" + stag_tag);
                RngStream drop_rng(tc.seed, "dropout" + stag_tag);
                const PointCloud aug = augment(train[static_cast<std::size_t>(idx)], aug_rng);
                const SamplePipeline s = prepare_sample(aug, model, &fps_rng, deterministic);
                const Matrix d1 = dropout_mask(drop_rng, 256);
                const Matrix d2 = dropout_mask(drop_rng, 256);
                const NodeId logits = forward_logits(tape, bind, model, s, &d1, &d2);
                const NodeId loss = tape.cross_entropy_logits(logits, s.label);
                loss_sum += tape.value(loss).at(0, 0);
                if (argmax_row(tape.value(logits)) == s.label) ++correct;
                batch_loss = batch_loss == kNoNode ? loss : tape.add(batch_loss, loss);
            }
            batch_loss = tape.scale(batch_loss, 1.0 / static_cast<double>(stop - start));
            tape.backward(batch_loss);
            std::map<std::string, Matrix> grads;
            for (const std::string& name : tunable) {
                const int pi = model.store.index_of(name);
                auto it = bind.all_bound().find(pi);
                if (it != bind.all_bound().end() && tape.has_grad(it->second)) {
                    grads.emplace(name, tape.grad(it->second));
                } else {
                    // Tunable parameter absent from this graph (e.g. A = L
                    // leaves G and U unused): its gradient is exactly zero.
                    const Param& p = model.store.at(pi);
                    grads.emplace(name, Matrix(p.value.rows(), p.value.cols(), prec));
                }
            }
            opt.step(model.store, tunable, grads, lr, tc.weight_decay);
        }

        int test_correct = 0;
        for (const SamplePipeline& s : test_pipes) {
            Tape tape(prec);
            Binding bind(tape, model.store);
            const NodeId logits = forward_logits(tape, bind, model, s, nullptr, nullptr);
            if (argmax_row(tape.value(logits)) == s.label) ++test_correct;
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.lr = lr;
        em.train_loss = loss_sum / static_cast<double>(train.size());
        em.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
        em.test_acc = static_cast<double>(test_correct) / static_cast<double>(test.size());
        const auto t1 = std::chrono::steady_clock::now();
        em.epoch_time_s =
            deterministic ? 0.0 : std::chrono::duration<double>(t1 - t0).count();
        metrics.push_back(em);
    }
    return metrics;
}

double evaluate_accuracy(Model& model, const std::vector<PointCloud>& test, Precision prec) {
    if (test.empty()) throw DataError("evaluate: empty dataset");
    int correct = 0;
    for (const PointCloud& c : test) {
        const SamplePipeline s = prepare_sample(c, model, nullptr, true);
        Tape tape(prec);
        Binding bind(tape, model.store);
        const NodeId logits = forward_logits(tape, bind, model, s, nullptr, nullptr);
        if (argmax_row(tape.value(logits)) == s.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace stag
