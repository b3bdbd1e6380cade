#include "stag/backbone.hpp"

#include <cmath>

#include "stag/error.hpp"

namespace stag {

void validate_backbone(const BackboneConfig& cfg) {
    if (cfg.d < 2 || cfg.d % 2 != 0) throw ConfigError("backbone: d must be even and >= 2");
    if (cfg.heads < 1 || cfg.d % cfg.heads != 0)
        throw ConfigError("backbone: d must be divisible by heads");
    if (cfg.L < 1) throw ConfigError("backbone: L must be >= 1");
    if (cfg.n < 2) throw ConfigError("backbone: n must be >= 2");
    if (cfg.mlp_ratio < 1) throw ConfigError("backbone: mlp_ratio must be >= 1");
    if (cfg.group_size < 1) throw ConfigError("backbone: group_size must be >= 1");
}

namespace {

Matrix fan_uniform(RngStream& rng, int rows, int cols) {
    const double s = 1.0 / std::sqrt(static_cast<double>(rows));
    return Matrix::uniform(rng, rows, cols, -s, s);
}

void add_linear(ParamStore& store, RngStream& rng, const std::string& prefix, int in, int out,
                bool tunable) {
    store.add(prefix + "_w", fan_uniform(rng, in, out), tunable);
    store.add(prefix + "_b", Matrix(1, out), tunable);
}

void add_layer_norm(ParamStore& store, const std::string& prefix, int d, bool tunable) {
    store.add(prefix + "_g", Matrix::full(1, d, 1.0), tunable);
    store.add(prefix + "_b", Matrix(1, d), tunable);
}

}  // namespace

void add_backbone_params(ParamStore& store, const BackboneConfig& cfg, RngStream& rng,
                         bool tunable) {
    validate_backbone(cfg);
    add_linear(store, rng, "tokenizer/l1", 3, cfg.d / 2, tunable);
    add_linear(store, rng, "tokenizer/l2", cfg.d / 2, cfg.d, tunable);
    add_linear(store, rng, "posemb/l1", 3, cfg.d, tunable);
    add_linear(store, rng, "posemb/l2", cfg.d, cfg.d, tunable);
    for (int l = 1; l <= cfg.L; ++l) {
        const std::string b = "block" + std::to_string(l) + "/";
        add_layer_norm(store, b + "ln1", cfg.d, tunable);
        add_linear(store, rng, b + "attn/q", cfg.d, cfg.d, tunable);
        add_linear(store, rng, b + "attn/k", cfg.d, cfg.d, tunable);
        add_linear(store, rng, b + "attn/v", cfg.d, cfg.d, tunable);
        add_linear(store, rng, b + "attn/o", cfg.d, cfg.d, tunable);
        add_layer_norm(store, b + "ln2", cfg.d, tunable);
        add_linear(store, rng, b + "mlp/l1", cfg.d, cfg.d * cfg.mlp_ratio, tunable);
        add_linear(store, rng, b + "mlp/l2", cfg.d * cfg.mlp_ratio, cfg.d, tunable);
    }
    add_layer_norm(store, "final_ln", cfg.d, tunable);
}

NodeId tokenize_forward(Tape& tape, Binding& bind, const BackboneConfig& cfg,
                        const std::vector<Matrix>& groups) {
    if (groups.empty()) throw DataError("tokenize: no patches");
    for (const Matrix& g : groups)
        if (g.rows() != cfg.group_size || g.cols() != 3)
            throw DimensionError("tokenize: each patch must be group_size x 3");
    Matrix stacked(static_cast<int>(groups.size()) * cfg.group_size, 3, tape.precision());
    int r = 0;
    for (const Matrix& g : groups)
        for (int i = 0; i < g.rows(); ++i, ++r)
            for (int c = 0; c < 3; ++c) stacked.at(r, c) = g.at(i, c);
    Tape::Scope scope(tape, "tokenizer");
    const NodeId pts = tape.input(std::move(stacked));
    NodeId h = tape.linear(pts, bind("tokenizer/l1_w"), bind("tokenizer/l1_b"));
    h = tape.leaky_relu(h);
    h = tape.linear(h, bind("tokenizer/l2_w"), bind("tokenizer/l2_b"));
    return tape.segment_max_pool(h, cfg.group_size);
}

NodeId posemb_forward(Tape& tape, Binding& bind, const BackboneConfig& cfg,
                      const Matrix& centers) {
    if (centers.cols() != 3) throw DimensionError("positional_embed: centers must be n x 3");
    (void)cfg;
    Tape::Scope scope(tape, "posemb");
    const NodeId c = tape.input(centers);
    NodeId h = tape.linear(c, bind("posemb/l1_w"), bind("posemb/l1_b"));
    h = tape.leaky_relu(h);
    return tape.linear(h, bind("posemb/l2_w"), bind("posemb/l2_b"));
}

NodeId block_forward(Tape& tape, Binding& bind, const BackboneConfig& cfg, NodeId t, NodeId pos,
                     int block_index) {
    const std::string b = "block" + std::to_string(block_index) + "/";
    Tape::Scope scope(tape, "block" + std::to_string(block_index));
    const NodeId with_pos = tape.add(t, pos);
    const NodeId ln1 = tape.layer_norm(with_pos, bind(b + "ln1_g"), bind(b + "ln1_b"));
    NodeId attn_out;
    {
        Tape::Scope attn_scope(tape, "attn");
        const NodeId q = tape.linear(ln1, bind(b + "attn/q_w"), bind(b + "attn/q_b"));
        const NodeId k = tape.linear(ln1, bind(b + "attn/k_w"), bind(b + "attn/k_b"));
        const NodeId v = tape.linear(ln1, bind(b + "attn/v_w"), bind(b + "attn/v_b"));
        const int dh = cfg.d / cfg.heads;
        NodeId ctx = kNoNode;
        for (int h = 0; h < cfg.heads; ++h) {
            const int j0 = h * dh, j1 = (h + 1) * dh;
            const NodeId qh = tape.slice_cols(q, j0, j1);
            const NodeId kh = tape.slice_cols(k, j0, j1);
            const NodeId vh = tape.slice_cols(v, j0, j1);
            NodeId s = tape.matmul_nt(qh, kh);
            s = tape.scale(s, 1.0 / std::sqrt(static_cast<double>(dh)));
            const NodeId a = tape.row_softmax(s);
            const NodeId hv = tape.matmul(a, vh);
            ctx = (ctx == kNoNode) ? hv : tape.concat_cols(ctx, hv);
        }
        attn_out = tape.linear(ctx, bind(b + "attn/o_w"), bind(b + "attn/o_b"));
    }
    NodeId out = tape.add(t, attn_out);
    const NodeId ln2 = tape.layer_norm(out, bind(b + "ln2_g"), bind(b + "ln2_b"));
    NodeId m;
    {
        Tape::Scope mlp_scope(tape, "mlp");
        m = tape.linear(ln2, bind(b + "mlp/l1_w"), bind(b + "mlp/l1_b"));
        m = tape.leaky_relu(m);
        m = tape.linear(m, bind(b + "mlp/l2_w"), bind(b + "mlp/l2_b"));
    }
    return tape.add(out, m);
}

NodeId final_norm_forward(Tape& tape, Binding& bind, NodeId t) {
    Tape::Scope scope(tape, "final_ln");
    return tape.layer_norm(t, bind("final_ln_g"), bind("final_ln_b"));
}

NodeId backbone_forward(Tape& tape, Binding& bind, const BackboneConfig& cfg,
                        const std::vector<Matrix>& groups, const Matrix& centers) {
    validate_backbone(cfg);
    NodeId t = tokenize_forward(tape, bind, cfg, groups);
    const NodeId pos = posemb_forward(tape, bind, cfg, centers);
    for (int l = 1; l <= cfg.L; ++l) t = block_forward(tape, bind, cfg, t, pos, l);
    return final_norm_forward(tape, bind, t);
}

}  // namespace stag
