#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"

#include "stag/accounting.hpp"
#include "stag/error.hpp"
#include "stag/geometry.hpp"
#include "stag/params.hpp"
#include "stag/rng.hpp"
#include "stag/tape.hpp"
#include "stag/training.hpp"

using namespace stag;

namespace {

BackboneConfig desk_bb() {
    BackboneConfig bb;
    bb.d = 32;
    bb.L = 4;
    bb.n = 16;
    bb.heads = 4;
    bb.mlp_ratio = 4;
    bb.group_size = 16;
    return bb;
}

StagConfig desk_sc(Variant v, int L, int A) {
    StagConfig sc;
    sc.d = 32;
    sc.d_prime = 16;
    sc.L = L;
    sc.A = A;
    sc.k = 4;
    sc.variant = v;
    sc.sharing = make_sharing(v, L, A);
    return sc;
}

SamplePipeline sample_for(const Model& model, std::uint64_t seed) {
    RngStream rng(seed, "accounting/sample");
    const int m = 4 * std::max(model.bb.n, model.bb.group_size);
    Matrix pts(m, 3);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < 3; ++j) pts.at(i, j) = rng.normal();
    PointCloud cloud;
    cloud.points = pts;
    cloud.label = 1;
    PointCloud norm = normalize_cloud(cloud);
    return prepare_sample(norm, model, nullptr, true);
}

// Forward and backward scope maps measured off a real taped pass.
std::pair<std::map<std::string, std::int64_t>, std::map<std::string, std::int64_t>> measure(
    const BackboneConfig& bb, const StagConfig& sc, Strategy strategy) {
    Model model = build_model(bb, sc, 4, strategy, 13, 5);
    const SamplePipeline s = sample_for(model, 3);
    Tape tape(Precision::Double);
    Binding bind(tape, model.store);
    const NodeId logits = forward_logits(tape, bind, model, s, nullptr, nullptr);
    const NodeId loss = tape.cross_entropy_logits(logits, s.label);
    tape.backward(loss);
    return {tape.forward_flops_by_scope(), tape.measured_backward_flops_by_scope()};
}

std::string diff_note(const std::map<std::string, std::int64_t>& a,
                      const std::map<std::string, std::int64_t>& b) {
    for (const auto& [k, v] : a) {
        auto it = b.find(k);
        if (it == b.end()) return k + ": missing on one side";
        if (it->second != v)
            return k + ": " + std::to_string(v) + " vs " + std::to_string(it->second);
    }
    for (const auto& [k, v] : b)
        if (!a.count(k)) return k + ": missing on one side";
    return "";
}

}  // namespace

TEST_CASE("backbone parameter count matches the store") {
    const BackboneConfig bb = desk_bb();
    ParamStore store;
    RngStream rng(2, "backbone/init");
    add_backbone_params(store, bb, rng, false);
    CHECK(count_backbone_params(bb) == store.count_elements(false));
}

TEST_CASE("tunable counts: closed forms and the published reference points") {
    const BackboneConfig bb = desk_bb();
    const StagConfig sc = desk_sc(Variant::Std, 4, 2);
    CHECK(count_tunable_params(bb, sc, 4, Strategy::HeadOnly) == count_head_params(32, 4));
    CHECK(count_tunable_params(bb, sc, 4, Strategy::StagStd) ==
          count_side_params(sc) + count_head_params(32, 4));
    CHECK(count_tunable_params(bb, sc, 4, Strategy::Full) ==
          count_backbone_params(bb) + count_head_params(32, 4));

    BackboneConfig reference;
    reference.d = 384;
    reference.L = 12;
    reference.n = 128;
    reference.heads = 6;
    reference.mlp_ratio = 4;
    reference.group_size = 32;
    const StagConfig pstd = [&] {
        StagConfig c;
        c.d = 384;
        c.d_prime = 192;
        c.L = 12;
        c.A = 6;
        c.variant = Variant::Std;
        c.sharing = make_sharing(Variant::Std, 12, 6);
        return c;
    }();
    CHECK(count_tunable_params(reference, pstd, 15, Strategy::HeadOnly) == 266511);
    CHECK(count_tunable_params(reference, pstd, 15, Strategy::StagStd) == 266511 + 258816);
}

TEST_CASE("edge conv transform cost per point and the k-fold gap") {
    for (int k : {2, 4, 8, 16})
        for (int dp : {4, 16, 192}) {
            const std::int64_t eff = edgeconv_transform_flops_per_point(dp, k, true);
            const std::int64_t orig = edgeconv_transform_flops_per_point(dp, k, false);
            CHECK(eff == 4LL * dp * dp);
            CHECK(orig == 4LL * k * dp * dp);
            CHECK(orig == k * eff);
        }
}

TEST_CASE("analytic ledger equals tape measurement, scope by scope") {
    const BackboneConfig bb = desk_bb();

    const auto check_strategy = [&](const StagConfig& sc, Strategy strategy) {
        const FlopLedger ledger = count_flops(bb, sc, 4, strategy);
        const auto [fwd, bwd] = measure(bb, sc, strategy);
        {
            INFO("forward " << to_string(strategy) << ": " << diff_note(ledger.forward, fwd));
            CHECK(ledger.forward == fwd);
        }
        {
            INFO("backward " << to_string(strategy) << ": " << diff_note(ledger.backward, bwd));
            CHECK(ledger.backward == bwd);
        }
    };

    SUBCASE("head only") { check_strategy(desk_sc(Variant::Std, 4, 2), Strategy::HeadOnly); }
    SUBCASE("full") { check_strategy(desk_sc(Variant::Std, 4, 2), Strategy::Full); }
    SUBCASE("standard side") { check_strategy(desk_sc(Variant::Std, 4, 2), Strategy::StagStd); }
    SUBCASE("layer-specialized side") {
        check_strategy(desk_sc(Variant::Sl, 4, 1), Strategy::StagSl);
    }
    SUBCASE("custom accumulation depths") {
        for (int A : {0, 1, 3, 4})
            check_strategy(desk_sc(Variant::Custom, 4, A), Strategy::StagCustom);
    }
    SUBCASE("other refinement functions") {
        for (RefineFn f :
             {RefineFn::OriginalEdgeConv, RefineFn::SimpleGraphConv, RefineFn::MaxPool}) {
            StagConfig sc = desk_sc(Variant::Std, 4, 2);
            sc.refine_fn = f;
            check_strategy(sc, Strategy::StagStd);
        }
    }
}

TEST_CASE("all-accumulation side leaves no backward work in the blocks") {
    // A = L: the side network only accumulates, nothing feeds back into the
    // token stream, so no transformer matmul participates in backward.
    const BackboneConfig bb = desk_bb();
    const FlopLedger ledger = count_flops(bb, desk_sc(Variant::Custom, 4, 4), 4,
                                          Strategy::StagCustom);
    for (int l = 1; l <= 4; ++l) CHECK(ledger.backward_for_block(l) == 0);
}

TEST_CASE("backward cost per block drops to zero below the accumulation depth") {
    const BackboneConfig bb = desk_bb();
    const FlopLedger ledger = count_flops(bb, desk_sc(Variant::Custom, 4, 2), 4,
                                          Strategy::StagCustom);
    CHECK(ledger.backward_for_block(1) == 0);
    CHECK(ledger.backward_for_block(2) == 0);
    CHECK(ledger.backward_for_block(3) == 0);  // feeds the first refined state only
    CHECK(ledger.backward_for_block(4) > 0);
}

TEST_CASE("cost report orderings across strategies") {
    const BackboneConfig bb = desk_bb();
    const StagConfig std_sc = desk_sc(Variant::Std, 4, 2);
    const StagConfig sl_sc = desk_sc(Variant::Sl, 4, 1);

    const CostReport full = cost_report(bb, std_sc, 4, Strategy::Full, Precision::Double);
    const CostReport head = cost_report(bb, std_sc, 4, Strategy::HeadOnly, Precision::Double);
    const CostReport sstd = cost_report(bb, std_sc, 4, Strategy::StagStd, Precision::Double);
    const CostReport ssl = cost_report(bb, sl_sc, 4, Strategy::StagSl, Precision::Double);

    CHECK(head.tunable_params < sstd.tunable_params);
    CHECK(sstd.tunable_params < ssl.tunable_params);
    CHECK(ssl.tunable_params < full.tunable_params);

    CHECK(head.backward_flops < sstd.backward_flops);
    CHECK(sstd.backward_flops < ssl.backward_flops);
    CHECK(ssl.backward_flops < full.backward_flops);

    CHECK(head.est_memory_bytes < sstd.est_memory_bytes);
    CHECK(sstd.est_memory_bytes < ssl.est_memory_bytes);
    CHECK(ssl.est_memory_bytes < full.est_memory_bytes);

    // The frozen forward pass is identical without a side network.
    CHECK(full.forward_flops == head.forward_flops);
    CHECK(sstd.forward_flops > head.forward_flops);

    CHECK(full.backward_flops_by_block.size() == 4);
    CHECK(head.backward_flops_by_block == std::vector<std::int64_t>(4, 0));

    // Halving the precision must shrink the byte estimate.
    CHECK(cost_report(bb, std_sc, 4, Strategy::Full, Precision::Single).est_memory_bytes <
          full.est_memory_bytes);
}

TEST_CASE("backward cost decreases as accumulation depth grows") {
    const BackboneConfig bb = desk_bb();
    std::int64_t prev = -1;
    for (int A : {0, 1, 2, 3, 4}) {
        const std::int64_t b =
            count_flops(bb, desk_sc(Variant::Custom, 4, A), 4, Strategy::StagCustom)
                .backward_total();
        if (prev >= 0) CHECK(b < prev);
        prev = b;
    }
}

TEST_CASE("cost tables carry one row per strategy") {
    const BackboneConfig bb = desk_bb();
    std::vector<CostReport> rows;
    rows.push_back(cost_report(bb, desk_sc(Variant::Std, 4, 2), 4, Strategy::HeadOnly,
                               Precision::Double));
    rows.push_back(cost_report(bb, desk_sc(Variant::Std, 4, 2), 4, Strategy::StagStd,
                               Precision::Double));
    const std::string csv = cost_table_csv(rows);
    CHECK(csv.rfind("strategy,tunable_params,forward_flops,backward_flops,est_memory_bytes",
                    0) == 0);
    CHECK(csv.find("head_only,") != std::string::npos);
    CHECK(csv.find("stag_std,") != std::string::npos);
    const std::string text = cost_table_text(rows);
    CHECK(text.find("head_only") != std::string::npos);
    CHECK(text.find("stag_std") != std::string::npos);
}
