#include "stag/accounting.hpp"

#include <functional>
#include <sstream>

#include "stag/error.hpp"

namespace stag {

std::int64_t FlopLedger::forward_total() const {
    std::int64_t t = 0;
    for (const auto& [k, v] : forward) t += v;
    return t;
}

std::int64_t FlopLedger::backward_total() const {
    std::int64_t t = 0;
    for (const auto& [k, v] : backward) t += v;
    return t;
}

std::int64_t FlopLedger::backward_for_block(int l) const {
    const std::string prefix = "block" + std::to_string(l) + "/";
    std::int64_t t = 0;
    for (const auto& [k, v] : backward)
        if (k.rfind(prefix, 0) == 0) t += v;
    return t;
}

std::int64_t count_backbone_params(const BackboneConfig& bb) {
    const std::int64_t d = bb.d, dm = static_cast<std::int64_t>(bb.d) * bb.mlp_ratio;
    const std::int64_t tokenizer = (3 * (d / 2) + d / 2) + ((d / 2) * d + d);
    const std::int64_t posemb = (3 * d + d) + (d * d + d);
    const std::int64_t per_block = 2 * d + 4 * (d * d + d) + 2 * d + (d * dm + dm) + (dm * d + d);
    return tokenizer + posemb + bb.L * per_block + 2 * d;
}

std::int64_t count_tunable_params(const BackboneConfig& bb, const StagConfig& stag,
                                  int num_classes, Strategy strategy) {
    const std::int64_t head = count_head_params(bb.d, num_classes);
    switch (strategy) {
        case Strategy::Full: return count_backbone_params(bb) + head;
        case Strategy::HeadOnly: return head;
        case Strategy::StagStd:
        case Strategy::StagSl:
        case Strategy::StagCustom: return count_side_params(stag) + head;
    }
    throw ConfigError("count_tunable_params: unknown strategy");
}

namespace {

bool uses_side(Strategy s) {
    return s == Strategy::StagStd || s == Strategy::StagSl || s == Strategy::StagCustom;
}

// Walks every matrix product the forward builders create, in the same scopes,
// carrying the same requires_grad dataflow the tape would. emit receives
// (scope, forward flops, number of operands receiving a gradient).
void walk_matmuls(const BackboneConfig& bb, const StagConfig& stag, int num_classes,
                  Strategy strategy,
                  const std::function<void(const std::string&, std::int64_t, int)>& emit) {
    validate_backbone(bb);
    const bool side = uses_side(strategy);
    if (side) validate_stag(stag);
    const bool full = strategy == Strategy::Full;
    const std::int64_t n = bb.n, d = bb.d, dm = static_cast<std::int64_t>(bb.d) * bb.mlp_ratio;
    const std::int64_t dh = d / bb.heads;
    const std::int64_t R = n * bb.group_size;
    const std::int64_t dp = stag.d_prime;

    // tokenizer: points are constants, weights tunable only under full
    emit("tokenizer", 2 * R * 3 * (d / 2), full ? 1 : 0);
    emit("tokenizer", 2 * R * (d / 2) * d, full ? 2 : 0);
    // positional embedding: centers are constants
    emit("posemb", 2 * n * 3 * d, full ? 1 : 0);
    emit("posemb", 2 * n * d * d, full ? 2 : 0);

    // Token stream requires_grad: under full from the start; under stag the
    // first modulated block output is T^{A+1}, so block inputs gain grads
    // from block A+2 onward.
    auto t_in_rg = [&](int l) {
        if (full) return true;
        if (side && stag.A < stag.L) return l >= stag.A + 2;
        return false;
    };

    for (int l = 1; l <= bb.L; ++l) {
        const std::string attn = "block" + std::to_string(l) + "/attn";
        const std::string mlp = "block" + std::to_string(l) + "/mlp";
        const bool in_rg = t_in_rg(l);
        const int qkv = (in_rg ? 1 : 0) + (full ? 1 : 0);
        emit(attn, 2 * n * d * d, qkv);  // q projection
        emit(attn, 2 * n * d * d, qkv);  // k projection
        emit(attn, 2 * n * d * d, qkv);  // v projection
        const bool qrg = in_rg || full;
        for (int h = 0; h < bb.heads; ++h) {
            emit(attn, 2 * n * dh * n, qrg ? 2 : 0);  // scores
            emit(attn, 2 * n * n * dh, qrg ? 2 : 0);  // context
        }
        emit(attn, 2 * n * d * d, (qrg ? 1 : 0) + (full ? 1 : 0));  // output projection
        const bool mid_rg = in_rg || full;
        emit(mlp, 2 * n * d * dm, (mid_rg ? 1 : 0) + (full ? 1 : 0));
        emit(mlp, 2 * n * dm * d, (mid_rg ? 1 : 0) + (full ? 1 : 0));

        if (side) {
            // With A = L the side state never reaches the loss, so its whole
            // subgraph is elided despite being tunable.
            const bool side_reaches_loss = stag.A < stag.L;
            const std::string sb = "side/block" + std::to_string(l);
            emit(sb + "/D", 2 * n * d * dp,
                 side_reaches_loss ? (t_in_rg(l) ? 1 : 0) + 1 : 0);
            if (l > stag.A) {
                const std::string tr = sb + "/G/transform";
                const std::string phi = sb + "/G/phi";
                switch (stag.refine_fn) {
                    case RefineFn::EfficientEdgeConv:
                        emit(tr, 2 * n * dp * dp, 2);
                        emit(tr, 2 * n * dp * dp, 2);
                        emit(phi, 2 * n * dp * dp, 2);
                        break;
                    case RefineFn::OriginalEdgeConv:
                        for (int j = 0; j < stag.k; ++j) emit(tr, 2 * n * (2 * dp) * dp, 2);
                        emit(phi, 2 * n * dp * dp, 2);
                        break;
                    case RefineFn::SimpleGraphConv:
                        emit(tr, 2 * n * dp * dp, 2);
                        emit(phi, 2 * n * dp * dp, 2);
                        break;
                    case RefineFn::MaxPool: break;
                }
                emit(sb + "/U", 2 * n * dp * d, 2);
            }
        }
    }

    const bool pooled_rg = full || (side && stag.A < stag.L);
    emit("head", 2 * 1 * (2 * d) * 256, (pooled_rg ? 1 : 0) + 1);
    emit("head", 2 * 1 * 256 * 256, 2);
    emit("head", 2 * 1 * 256 * num_classes, 2);
    (void)num_classes;
}

}  // namespace

FlopLedger count_flops(const BackboneConfig& bb, const StagConfig& stag, int num_classes,
                       Strategy strategy) {
    FlopLedger ledger;
    walk_matmuls(bb, stag, num_classes, strategy,
                 [&ledger](const std::string& scope, std::int64_t flops, int grad_operands) {
                     if (flops > 0) ledger.forward[scope] += flops;
                     const std::int64_t bwd = flops * grad_operands;
                     if (bwd > 0) ledger.backward[scope] += bwd;
                 });
    return ledger;
}

std::int64_t estimate_memory(const BackboneConfig& bb, const StagConfig& stag, int num_classes,
                             Strategy strategy, Precision prec) {
    const bool side = uses_side(strategy);
    const bool full = strategy == Strategy::Full;
    const std::int64_t pb = precision_bytes(prec);
    std::int64_t all_params = count_backbone_params(bb) + count_head_params(bb.d, num_classes);
    if (side) all_params += count_side_params(stag);
    const std::int64_t tunable = count_tunable_params(bb, stag, num_classes, strategy);

    // Activation elements for layers that participate in backward: the block
    // internals of backbone blocks whose input carries gradient, the side
    // network's M-block tensors, and the head. These mirror the tensors the
    // builders create; the exact census lives on the tape, this is the
    // analytic estimate of the same trend.
    const std::int64_t n = bb.n, d = bb.d, dm = static_cast<std::int64_t>(bb.d) * bb.mlp_ratio;
    const std::int64_t dp = stag.d_prime;
    const std::int64_t per_block =
        n * d * 8 + 3 * static_cast<std::int64_t>(bb.heads) * n * n + 2 * n * dm;
    std::int64_t act_elems = 0;
    int participating_blocks = 0;
    if (full)
        participating_blocks = bb.L;
    else if (side && stag.A < stag.L)
        participating_blocks = bb.L - stag.A - 1;  // block A+1 internals are elided
    act_elems += static_cast<std::int64_t>(participating_blocks) * per_block;
    if (full) {
        act_elems += n * bb.group_size * (d / 2 + d) + n * (d + d);  // tokenizer, posemb
    }
    if (side && stag.A < stag.L) {
        const std::int64_t m_blocks = stag.L - stag.A;
        const std::int64_t refine_elems =
            stag.refine_fn == RefineFn::MaxPool
                ? static_cast<std::int64_t>(stag.k) * n * dp
                : (static_cast<std::int64_t>(stag.k) * 3 + 4) * n * dp;
        act_elems += static_cast<std::int64_t>(stag.L) * n * dp;       // D outputs
        act_elems += m_blocks * (refine_elems + n * dp + 2 * n * d);   // refine, U, modulate
    }
    act_elems += 2 * d + 2 * 256 + num_classes;  // head activations, saved in every strategy

    return all_params * pb + 3 * tunable * pb + act_elems * pb;
}

CostReport cost_report(const BackboneConfig& bb, const StagConfig& stag, int num_classes,
                       Strategy strategy, Precision prec) {
    CostReport r;
    r.strategy = to_string(strategy);
    r.tunable_params = count_tunable_params(bb, stag, num_classes, strategy);
    const FlopLedger ledger = count_flops(bb, stag, num_classes, strategy);
    r.forward_flops = ledger.forward_total();
    r.backward_flops = ledger.backward_total();
    r.backward_flops_by_block.resize(static_cast<std::size_t>(bb.L));
    for (int l = 1; l <= bb.L; ++l)
        r.backward_flops_by_block[static_cast<std::size_t>(l - 1)] = ledger.backward_for_block(l);
    r.est_memory_bytes = estimate_memory(bb, stag, num_classes, strategy, prec);
    return r;
}

std::string cost_table_csv(const std::vector<CostReport>& rows) {
    std::ostringstream os;
    os << "strategy,tunable_params,forward_flops,backward_flops,est_memory_bytes\n";
    for (const CostReport& r : rows)
        os << r.strategy << ',' << r.tunable_params << ',' << r.forward_flops << ','
           << r.backward_flops << ',' << r.est_memory_bytes << '\n';
    return os.str();
}

std::string cost_table_text(const std::vector<CostReport>& rows) {
    std::ostringstream os;
    os << "strategy       tunable_params  forward_flops  backward_flops  est_memory_bytes\n";
    for (const CostReport& r : rows) {
        os << r.strategy;
        for (std::size_t i = r.strategy.size(); i < 15; ++i) os << ' ';
        std::string cols[4] = {std::to_string(r.tunable_params), std::to_string(r.forward_flops),
                               std::to_string(r.backward_flops),
                               std::to_string(r.est_memory_bytes)};
        const std::size_t widths[4] = {14, 13, 14, 16};
        for (int c = 0; c < 4; ++c) {
            for (std::size_t i = cols[c].size(); i < widths[c]; ++i) os << ' ';
            os << cols[c] << (c == 3 ? '\n' : ' ');
        }
    }
    return os.str();
}

std::int64_t edgeconv_transform_flops_per_point(int d_prime, int k, bool efficient) {
    const std::int64_t dp = d_prime;
    if (efficient) return 2 * (2 * dp * dp);
    return static_cast<std::int64_t>(k) * 2 * (2 * dp) * dp;
}

}  // namespace stag
