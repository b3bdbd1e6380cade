#include "stag/adapter.hpp"

#include <algorithm>
#include <cmath>

#include "stag/error.hpp"

namespace stag {

Variant variant_from_string(const std::string& s) {
    if (s == "std") return Variant::Std;
    if (s == "sl") return Variant::Sl;
    if (s == "custom") return Variant::Custom;
    throw ConfigError("unknown variant: " + s);
}

RefineFn refine_from_string(const std::string& s) {
    if (s == "efficient_edgeconv") return RefineFn::EfficientEdgeConv;
    if (s == "original_edgeconv") return RefineFn::OriginalEdgeConv;
    if (s == "simple_graph_conv") return RefineFn::SimpleGraphConv;
    if (s == "max_pool") return RefineFn::MaxPool;
    throw ConfigError("unknown refine_fn: " + s);
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::Std: return "std";
        case Variant::Sl: return "sl";
        case Variant::Custom: return "custom";
    }
    return "?";
}

std::string to_string(RefineFn f) {
    switch (f) {
        case RefineFn::EfficientEdgeConv: return "efficient_edgeconv";
        case RefineFn::OriginalEdgeConv: return "original_edgeconv";
        case RefineFn::SimpleGraphConv: return "simple_graph_conv";
        case RefineFn::MaxPool: return "max_pool";
    }
    return "?";
}

int default_A(Variant v, int L) {
    switch (v) {
        case Variant::Std: return L / 2;
        case Variant::Sl: return std::max(1, L / 4);
        case Variant::Custom: return L / 2;
    }
    return L / 2;
}

namespace {

std::vector<std::vector<int>> runs_of(int first, int last, int run) {
    std::vector<std::vector<int>> groups;
    for (int l = first; l <= last;) {
        std::vector<int> g;
        for (int i = 0; i < run && l <= last; ++i, ++l) g.push_back(l);
        groups.push_back(std::move(g));
    }
    return groups;
}

void check_partition(const std::vector<std::vector<int>>& groups, int first, int last,
                     const char* what) {
    std::vector<char> seen(static_cast<std::size_t>(std::max(0, last - first + 1)), 0);
    for (const auto& g : groups) {
        if (g.empty()) throw ConfigError(std::string("sharing map: empty ") + what + " group");
        for (int l : g) {
            if (l < first || l > last)
                throw ConfigError(std::string("sharing map: ") + what + " block index " +
                                  std::to_string(l) + " out of range");
            if (seen[static_cast<std::size_t>(l - first)])
                throw ConfigError(std::string("sharing map: ") + what + " block " +
                                  std::to_string(l) + " appears twice");
            seen[static_cast<std::size_t>(l - first)] = 1;
        }
    }
    for (int l = first; l <= last; ++l)
        if (!seen[static_cast<std::size_t>(l - first)])
            throw ConfigError(std::string("sharing map: ") + what + " block " + std::to_string(l) +
                              " missing");
}

}  // namespace

SharingMap make_sharing(Variant v, int L, int A) {
    SharingMap m;
    if (v == Variant::Sl) {
        m.d_groups = runs_of(1, L, 3);
        m.g_groups = runs_of(A + 1, L, 3);
        m.u_groups = runs_of(A + 1, L, 3);
    } else {
        // std and custom default: one spanning group per layer type
        m.d_groups = runs_of(1, L, L);
        if (A < L) {
            m.g_groups = runs_of(A + 1, L, L - A);
            m.u_groups = runs_of(A + 1, L, L - A);
        }
    }
    return m;
}

void validate_stag(const StagConfig& cfg) {
    if (cfg.d < 1 || cfg.d_prime < 1) throw ConfigError("stag: d and d_prime must be >= 1");
    if (cfg.L < 1) throw ConfigError("stag: L must be >= 1");
    if (cfg.A < 0 || cfg.A > cfg.L) throw ConfigError("stag: A must be in [0, L]");
    if (cfg.k < 1) throw ConfigError("stag: k must be >= 1");
    if (cfg.variant == Variant::Std && cfg.A != cfg.L / 2)
        throw ConfigError("stag: std variant requires A = L/2");
    if (cfg.variant == Variant::Sl && cfg.A != default_A(Variant::Sl, cfg.L))
        throw ConfigError("stag: sl variant requires A = L/4");
    check_partition(cfg.sharing.d_groups, 1, cfg.L, "D");
    check_partition(cfg.sharing.g_groups, cfg.A + 1, cfg.L, "G");
    check_partition(cfg.sharing.u_groups, cfg.A + 1, cfg.L, "U");
}

int group_of(const std::vector<std::vector<int>>& groups, int l) {
    for (std::size_t i = 0; i < groups.size(); ++i)
        for (int b : groups[i])
            if (b == l) return static_cast<int>(i);
    throw ContractError("sharing map: no group owns block " + std::to_string(l));
}

namespace {

Matrix fan_uniform(RngStream& rng, int rows, int cols) {
    const double s = 1.0 / std::sqrt(static_cast<double>(rows));
    return Matrix::uniform(rng, rows, cols, -s, s);
}

std::int64_t pg_for(RefineFn f, int dp) {
    const std::int64_t d2 = static_cast<std::int64_t>(dp) * dp;
    switch (f) {
        case RefineFn::EfficientEdgeConv:
        case RefineFn::OriginalEdgeConv: return 3 * d2 + dp;
        case RefineFn::SimpleGraphConv: return 2 * d2 + dp;
        case RefineFn::MaxPool: return 0;
    }
    return 0;
}

}  // namespace

void add_side_params(ParamStore& store, const StagConfig& cfg, RngStream& rng) {
    validate_stag(cfg);
    const int d = cfg.d, dp = cfg.d_prime;
    for (std::size_t i = 0; i < cfg.sharing.d_groups.size(); ++i) {
        const std::string p = "side/D" + std::to_string(i);
        store.add(p + "_w", fan_uniform(rng, d, dp), true);
        store.add(p + "_b", Matrix(1, dp), true);
    }
    for (std::size_t i = 0; i < cfg.sharing.g_groups.size(); ++i) {
        const std::string p = "side/G" + std::to_string(i);
        switch (cfg.refine_fn) {
            case RefineFn::EfficientEdgeConv:
                store.add(p + "_wp", fan_uniform(rng, dp, dp), true);
                store.add(p + "_w2", fan_uniform(rng, dp, dp), true);
                break;
            case RefineFn::OriginalEdgeConv:
                store.add(p + "_w", fan_uniform(rng, 2 * dp, dp), true);
                break;
            case RefineFn::SimpleGraphConv:
                store.add(p + "_w", fan_uniform(rng, dp, dp), true);
                break;
            case RefineFn::MaxPool: break;
        }
        if (cfg.refine_fn != RefineFn::MaxPool) {
            store.add(p + "_phi_w", fan_uniform(rng, dp, dp), true);
            store.add(p + "_phi_b", Matrix(1, dp), true);
        }
    }
    for (std::size_t i = 0; i < cfg.sharing.u_groups.size(); ++i) {
        const std::string p = "side/U" + std::to_string(i);
        store.add(p + "_w", Matrix(dp, d), true);
        store.add(p + "_b", Matrix(1, d), true);
    }
}

std::int64_t count_side_params(const StagConfig& cfg) {
    const std::int64_t d = cfg.d, dp = cfg.d_prime;
    const std::int64_t p_d = d * dp + dp;
    const std::int64_t p_u = dp * d + d;
    return static_cast<std::int64_t>(cfg.sharing.d_groups.size()) * p_d +
           static_cast<std::int64_t>(cfg.sharing.g_groups.size()) * pg_for(cfg.refine_fn, cfg.d_prime) +
           static_cast<std::int64_t>(cfg.sharing.u_groups.size()) * p_u;
}

namespace {

void check_graph(const Tape& tape, NodeId h, const NeighborGraph& graph, const char* where) {
    if (graph.k < 1) throw DataError(std::string(where) + ": empty neighbor rows");
    if (graph.n != tape.value(h).rows())
        throw DimensionError(std::string(where) + ": graph size does not match token count");
}

std::vector<int> slot_indices(const NeighborGraph& graph, int j) {
    std::vector<int> idx(static_cast<std::size_t>(graph.n));
    for (int i = 0; i < graph.n; ++i) idx[static_cast<std::size_t>(i)] = graph.at(i, j);
    return idx;
}

// Element-wise max over the k per-edge feature maps.
NodeId pool_slots(Tape& tape, const std::vector<NodeId>& slots) {
    NodeId pooled = slots[0];
    for (std::size_t j = 1; j < slots.size(); ++j) pooled = tape.max_elem(pooled, slots[j]);
    return pooled;
}

}  // namespace

NodeId efficient_edgeconv(Tape& tape, NodeId h, const NeighborGraph& graph, NodeId w_prime,
                          NodeId w2, NodeId phi_w, NodeId phi_b) {
    check_graph(tape, h, graph, "efficient_edgeconv");
    NodeId pooled;
    {
        Tape::Scope scope(tape, "transform");
        const NodeId self = tape.matmul(h, w_prime);
        const NodeId proj = tape.matmul(h, w2);
        std::vector<NodeId> slots;
        slots.reserve(static_cast<std::size_t>(graph.k));
        for (int j = 0; j < graph.k; ++j) {
            const NodeId gathered = tape.gather_rows(proj, slot_indices(graph, j));
            slots.push_back(tape.leaky_relu(tape.add(self, gathered)));
        }
        pooled = pool_slots(tape, slots);
    }
    Tape::Scope scope(tape, "phi");
    return tape.linear(pooled, phi_w, phi_b);
}

NodeId original_edgeconv(Tape& tape, NodeId h, const NeighborGraph& graph, NodeId w,
                         NodeId phi_w, NodeId phi_b) {
    check_graph(tape, h, graph, "original_edgeconv");
    if (tape.value(w).rows() != 2 * tape.value(h).cols())
        throw DimensionError("original_edgeconv: W must be 2*d_prime x d_prime");
    NodeId pooled;
    {
        Tape::Scope scope(tape, "transform");
        std::vector<NodeId> slots;
        slots.reserve(static_cast<std::size_t>(graph.k));
        for (int j = 0; j < graph.k; ++j) {
            const NodeId hj = tape.gather_rows(h, slot_indices(graph, j));
            const NodeId feat = tape.concat_cols(h, tape.sub(hj, h));
            slots.push_back(tape.leaky_relu(tape.matmul(feat, w)));
        }
        pooled = pool_slots(tape, slots);
    }
    Tape::Scope scope(tape, "phi");
    return tape.linear(pooled, phi_w, phi_b);
}

NodeId simple_graph_conv(Tape& tape, NodeId h, const NeighborGraph& graph, NodeId w,
                         NodeId phi_w, NodeId phi_b) {
    check_graph(tape, h, graph, "simple_graph_conv");
    NodeId pooled;
    {
        Tape::Scope scope(tape, "transform");
        const NodeId acted = tape.leaky_relu(tape.matmul(h, w));
        std::vector<NodeId> slots;
        slots.reserve(static_cast<std::size_t>(graph.k));
        for (int j = 0; j < graph.k; ++j)
            slots.push_back(tape.gather_rows(acted, slot_indices(graph, j)));
        pooled = pool_slots(tape, slots);
    }
    Tape::Scope scope(tape, "phi");
    return tape.linear(pooled, phi_w, phi_b);
}

NodeId max_pool_refine(Tape& tape, NodeId h, const NeighborGraph& graph) {
    check_graph(tape, h, graph, "max_pool_refine");
    std::vector<NodeId> slots;
    slots.reserve(static_cast<std::size_t>(graph.k));
    for (int j = 0; j < graph.k; ++j) slots.push_back(tape.gather_rows(h, slot_indices(graph, j)));
    return pool_slots(tape, slots);
}

NodeId refine_forward(Tape& tape, Binding& bind, const StagConfig& cfg, int block_index, NodeId h,
                      const NeighborGraph& graph) {
    if (cfg.refine_fn == RefineFn::MaxPool) return max_pool_refine(tape, h, graph);
    const std::string p = "side/G" + std::to_string(group_of(cfg.sharing.g_groups, block_index));
    switch (cfg.refine_fn) {
        case RefineFn::EfficientEdgeConv:
            return efficient_edgeconv(tape, h, graph, bind(p + "_wp"), bind(p + "_w2"),
                                      bind(p + "_phi_w"), bind(p + "_phi_b"));
        case RefineFn::OriginalEdgeConv:
            return original_edgeconv(tape, h, graph, bind(p + "_w"), bind(p + "_phi_w"),
                                     bind(p + "_phi_b"));
        case RefineFn::SimpleGraphConv:
            return simple_graph_conv(tape, h, graph, bind(p + "_w"), bind(p + "_phi_w"),
                                     bind(p + "_phi_b"));
        case RefineFn::MaxPool: break;
    }
    throw ConfigError("refine_forward: unhandled refine_fn");
}

NodeId stag_forward(Tape& tape, Binding& bind, const BackboneConfig& bb, const StagConfig& cfg,
                    const std::vector<Matrix>& groups, const Matrix& centers,
                    const NeighborGraph& graph) {
    validate_backbone(bb);
    validate_stag(cfg);
    if (cfg.d != bb.d || cfg.L != bb.L)
        throw ConfigError("stag_forward: side and backbone configs disagree on d or L");
    NodeId t_prev = tokenize_forward(tape, bind, bb, groups);
    const NodeId pos = posemb_forward(tape, bind, bb, centers);
    NodeId x = tape.input(Matrix(bb.n, cfg.d_prime));
    for (int l = 1; l <= cfg.L; ++l) {
        NodeId t = block_forward(tape, bind, bb, t_prev, pos, l);
        {
            Tape::Scope scope(tape, "side/block" + std::to_string(l));
            const std::string dp = "side/D" + std::to_string(group_of(cfg.sharing.d_groups, l));
            NodeId down;
            {
                Tape::Scope d_scope(tape, "D");
                down = tape.linear(t_prev, bind(dp + "_w"), bind(dp + "_b"));
            }
            if (l <= cfg.A) {
                x = tape.add(down, x);
            } else {
                const NodeId acc = tape.add(down, x);
                {
                    Tape::Scope g_scope(tape, "G");
                    x = refine_forward(tape, bind, cfg, l, acc, graph);
                }
                const std::string up = "side/U" + std::to_string(group_of(cfg.sharing.u_groups, l));
                NodeId u;
                {
                    Tape::Scope u_scope(tape, "U");
                    u = tape.linear(x, bind(up + "_w"), bind(up + "_b"));
                }
                t = tape.add(u, t);
            }
        }
        t_prev = t;
    }
    return final_norm_forward(tape, bind, t_prev);
}

}  // namespace stag
