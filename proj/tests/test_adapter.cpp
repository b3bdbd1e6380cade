#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"

#include "stag/adapter.hpp"
#include "stag/backbone.hpp"
#include "stag/error.hpp"
#include "stag/geometry.hpp"
#include "stag/params.hpp"
#include "stag/rng.hpp"
#include "stag/tape.hpp"

using namespace stag;

namespace {

Matrix row(std::initializer_list<double> vals) {
    Matrix m(1, static_cast<int>(vals.size()));
    int j = 0;
    for (double v : vals) m.at(0, j++) = v;
    return m;
}

Matrix col(std::initializer_list<double> vals) {
    Matrix m(static_cast<int>(vals.size()), 1);
    int i = 0;
    for (double v : vals) m.at(i++, 0) = v;
    return m;
}

Matrix with_bias(const Matrix& x, const Matrix& b) {
    Matrix y = x;
    for (int i = 0; i < y.rows(); ++i)
        for (int j = 0; j < y.cols(); ++j) y.at(i, j) += b.at(0, j);
    return y;
}

Matrix ref_layer_norm(const Matrix& x, const Matrix& g, const Matrix& b) {
    Matrix y(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i) {
        double mean = 0.0;
        for (int j = 0; j < x.cols(); ++j) mean += x.at(i, j);
        mean /= x.cols();
        double var = 0.0;
        for (int j = 0; j < x.cols(); ++j) {
            const double c = x.at(i, j) - mean;
            var += c * c;
        }
        var /= x.cols();
        const double inv = 1.0 / std::sqrt(var + 1e-5);
        for (int j = 0; j < x.cols(); ++j)
            y.at(i, j) = (x.at(i, j) - mean) * inv * g.at(0, j) + b.at(0, j);
    }
    return y;
}

Matrix ref_softmax_rows(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i) {
        double m = x.at(i, 0);
        for (int j = 1; j < x.cols(); ++j) m = std::max(m, x.at(i, j));
        double z = 0.0;
        for (int j = 0; j < x.cols(); ++j) z += std::exp(x.at(i, j) - m);
        for (int j = 0; j < x.cols(); ++j) y.at(i, j) = std::exp(x.at(i, j) - m) / z;
    }
    return y;
}

Matrix ref_leaky(Matrix x) {
    for (std::size_t e = 0; e < x.size(); ++e)
        if (x.data()[e] < 0.0) x.data()[e] *= 0.2;
    return x;
}

Matrix slice(const Matrix& x, int j0, int j1) {
    Matrix y(x.rows(), j1 - j0);
    for (int i = 0; i < x.rows(); ++i)
        for (int j = j0; j < j1; ++j) y.at(i, j - j0) = x.at(i, j);
    return y;
}

Matrix ref_block(const ParamStore& store, const BackboneConfig& cfg, const Matrix& t,
                 const Matrix& pos, int l) {
    const std::string b = "block" + std::to_string(l) + "/";
    const auto P = [&](const std::string& n) -> const Matrix& { return store.at(b + n).value; };

    Matrix with_pos = t;
    for (int i = 0; i < t.rows(); ++i)
        for (int j = 0; j < t.cols(); ++j) with_pos.at(i, j) += pos.at(i, j);
    const Matrix ln1 = ref_layer_norm(with_pos, P("ln1_g"), P("ln1_b"));

    const Matrix q = with_bias(matmul(ln1, P("attn/q_w")), P("attn/q_b"));
    const Matrix k = with_bias(matmul(ln1, P("attn/k_w")), P("attn/k_b"));
    const Matrix v = with_bias(matmul(ln1, P("attn/v_w")), P("attn/v_b"));
    const int dh = cfg.d / cfg.heads;
    Matrix ctx(t.rows(), cfg.d);
    for (int h = 0; h < cfg.heads; ++h) {
        const Matrix qh = slice(q, h * dh, (h + 1) * dh);
        const Matrix kh = slice(k, h * dh, (h + 1) * dh);
        const Matrix vh = slice(v, h * dh, (h + 1) * dh);
        Matrix s = matmul_nt(qh, kh);
        for (std::size_t e = 0; e < s.size(); ++e) s.data()[e] /= std::sqrt(double(dh));
        const Matrix hv = matmul(ref_softmax_rows(s), vh);
        for (int i = 0; i < t.rows(); ++i)
            for (int j = 0; j < dh; ++j) ctx.at(i, h * dh + j) = hv.at(i, j);
    }
    const Matrix attn_out = with_bias(matmul(ctx, P("attn/o_w")), P("attn/o_b"));
    Matrix out = t;
    for (std::size_t e = 0; e < out.size(); ++e) out.data()[e] += attn_out.data()[e];
    const Matrix ln2 = ref_layer_norm(out, P("ln2_g"), P("ln2_b"));
    Matrix m = ref_leaky(with_bias(matmul(ln2, P("mlp/l1_w")), P("mlp/l1_b")));
    m = with_bias(matmul(m, P("mlp/l2_w")), P("mlp/l2_b"));
    for (std::size_t e = 0; e < out.size(); ++e) out.data()[e] += m.data()[e];
    return out;
}

// Shared point-wise 3 -> d/2 -> d map, max-pooled over each patch.
Matrix ref_tokenize(const ParamStore& store, const BackboneConfig& cfg,
                    const std::vector<Matrix>& groups) {
    Matrix tokens(static_cast<int>(groups.size()), cfg.d);
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        Matrix h = ref_leaky(with_bias(matmul(groups[gi], store.at("tokenizer/l1_w").value),
                                       store.at("tokenizer/l1_b").value));
        h = with_bias(matmul(h, store.at("tokenizer/l2_w").value),
                      store.at("tokenizer/l2_b").value);
        for (int j = 0; j < cfg.d; ++j) {
            double m = h.at(0, j);
            for (int i = 1; i < h.rows(); ++i) m = std::max(m, h.at(i, j));
            tokens.at(static_cast<int>(gi), j) = m;
        }
    }
    return tokens;
}

Matrix ref_posemb(const ParamStore& store, const Matrix& centers) {
    Matrix h = ref_leaky(with_bias(matmul(centers, store.at("posemb/l1_w").value),
                                   store.at("posemb/l1_b").value));
    return with_bias(matmul(h, store.at("posemb/l2_w").value), store.at("posemb/l2_b").value);
}

Matrix gather(const Matrix& x, const std::vector<int>& idx) {
    Matrix y(static_cast<int>(idx.size()), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < x.cols(); ++j) y.at(static_cast<int>(i), j) = x.at(idx[i], j);
    return y;
}

// x_i = phi(max_j leaky(h_i W' + h_j W2)), straight-line.
Matrix ref_efficient_edgeconv(const Matrix& h, const NeighborGraph& graph, const Matrix& w_prime,
                              const Matrix& w2, const Matrix& phi_w, const Matrix& phi_b) {
    const Matrix self = matmul(h, w_prime);
    const Matrix proj = matmul(h, w2);
    Matrix pooled(h.rows(), w_prime.cols());
    for (int i = 0; i < h.rows(); ++i) {
        for (int c = 0; c < pooled.cols(); ++c) {
            double m = -1e300;
            for (int j = 0; j < graph.k; ++j) {
                double e = self.at(i, c) + proj.at(graph.at(i, j), c);
                if (e < 0.0) e *= 0.2;
                m = std::max(m, e);
            }
            pooled.at(i, c) = m;
        }
    }
    return with_bias(matmul(pooled, phi_w), phi_b);
}

// Algorithm unrolled with plain matrices: accumulate D over the first A
// blocks, then refine and modulate the token stream through the rest.
Matrix ref_stag_pipeline(const ParamStore& store, const BackboneConfig& bb, const StagConfig& sc,
                         const std::vector<Matrix>& groups, const Matrix& centers,
                         const NeighborGraph& graph) {
    Matrix t_prev = ref_tokenize(store, bb, groups);
    const Matrix pos = ref_posemb(store, centers);
    Matrix x(bb.n, sc.d_prime);
    for (int l = 1; l <= sc.L; ++l) {
        Matrix t = ref_block(store, bb, t_prev, pos, l);
        const std::string dp = "side/D" + std::to_string(group_of(sc.sharing.d_groups, l));
        const Matrix down =
            with_bias(matmul(t_prev, store.at(dp + "_w").value), store.at(dp + "_b").value);
        if (l <= sc.A) {
            for (std::size_t e = 0; e < x.size(); ++e) x.data()[e] += down.data()[e];
        } else {
            Matrix acc = down;
            for (std::size_t e = 0; e < acc.size(); ++e) acc.data()[e] += x.data()[e];
            const std::string gp = "side/G" + std::to_string(group_of(sc.sharing.g_groups, l));
            x = ref_efficient_edgeconv(acc, graph, store.at(gp + "_wp").value,
                                       store.at(gp + "_w2").value, store.at(gp + "_phi_w").value,
                                       store.at(gp + "_phi_b").value);
            const std::string up = "side/U" + std::to_string(group_of(sc.sharing.u_groups, l));
            const Matrix u =
                with_bias(matmul(x, store.at(up + "_w").value), store.at(up + "_b").value);
            for (std::size_t e = 0; e < t.size(); ++e) t.data()[e] += u.data()[e];
        }
        t_prev = t;
    }
    return ref_layer_norm(t_prev, store.at("final_ln_g").value, store.at("final_ln_b").value);
}

void randomize_side(ParamStore& store, std::uint64_t seed) {
    RngStream rng(seed, "test/side-randomize");
    for (const Param& p : store.items()) {
        if (p.name.rfind("side/", 0) != 0) continue;
        RngStream prng = rng.derive(p.name);
        store.at(p.name).value = Matrix::uniform(prng, p.value.rows(), p.value.cols(), -0.5, 0.5);
    }
}

NeighborGraph chain3() {
    NeighborGraph g;
    g.n = 3;
    g.k = 1;
    g.indices = {1, 0, 1};
    return g;
}

}  // namespace

TEST_CASE("variant and refine names round-trip") {
    for (Variant v : {Variant::Std, Variant::Sl, Variant::Custom})
        CHECK(variant_from_string(to_string(v)) == v);
    for (RefineFn f : {RefineFn::EfficientEdgeConv, RefineFn::OriginalEdgeConv,
                       RefineFn::SimpleGraphConv, RefineFn::MaxPool})
        CHECK(refine_from_string(to_string(f)) == f);
    CHECK(to_string(Variant::Std) == "std");
    CHECK(to_string(Variant::Sl) == "sl");
    CHECK(to_string(RefineFn::EfficientEdgeConv) == "efficient_edgeconv");
    CHECK_THROWS_AS(variant_from_string("stdd"), ConfigError);
    CHECK_THROWS_AS(refine_from_string(""), ConfigError);
}

TEST_CASE("default accumulation depth per variant") {
    CHECK(default_A(Variant::Std, 12) == 6);
    CHECK(default_A(Variant::Std, 4) == 2);
    CHECK(default_A(Variant::Sl, 12) == 3);
    CHECK(default_A(Variant::Sl, 4) == 1);
    CHECK(default_A(Variant::Sl, 2) == 1);  // floor clamps to 1
}

TEST_CASE("sharing maps: spanning groups and runs of three") {
    SUBCASE("std spans every instance with one group") {
        const SharingMap m = make_sharing(Variant::Std, 12, 6);
        REQUIRE(m.d_groups.size() == 1);
        CHECK(m.d_groups[0] == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
        REQUIRE(m.g_groups.size() == 1);
        CHECK(m.g_groups[0] == std::vector<int>{7, 8, 9, 10, 11, 12});
        CHECK(m.u_groups == m.g_groups);
    }
    SUBCASE("sl tiles runs of three") {
        const SharingMap m = make_sharing(Variant::Sl, 12, 3);
        REQUIRE(m.d_groups.size() == 4);
        CHECK(m.d_groups[0] == std::vector<int>{1, 2, 3});
        CHECK(m.d_groups[3] == std::vector<int>{10, 11, 12});
        REQUIRE(m.g_groups.size() == 3);
        CHECK(m.g_groups[0] == std::vector<int>{4, 5, 6});
        CHECK(m.g_groups[2] == std::vector<int>{10, 11, 12});
        CHECK(m.u_groups == m.g_groups);
    }
    SUBCASE("sl leaves a short trailing run") {
        const SharingMap m = make_sharing(Variant::Sl, 4, 1);
        REQUIRE(m.d_groups.size() == 2);
        CHECK(m.d_groups[0] == std::vector<int>{1, 2, 3});
        CHECK(m.d_groups[1] == std::vector<int>{4});
        REQUIRE(m.g_groups.size() == 1);
        CHECK(m.g_groups[0] == std::vector<int>{2, 3, 4});
    }
    SUBCASE("custom default spans, and A = L has no refinement groups") {
        const SharingMap m = make_sharing(Variant::Custom, 4, 1);
        REQUIRE(m.d_groups.size() == 1);
        CHECK(m.g_groups.size() == 1);
        CHECK(m.g_groups[0] == std::vector<int>{2, 3, 4});
        const SharingMap all_acc = make_sharing(Variant::Custom, 4, 4);
        CHECK(all_acc.d_groups.size() == 1);
        CHECK(all_acc.g_groups.empty());
        CHECK(all_acc.u_groups.empty());
    }
}

TEST_CASE("stag config validation rejects inconsistent settings") {
    StagConfig c;
    c.d = 8;
    c.d_prime = 4;
    c.L = 4;
    c.A = 2;
    c.k = 2;
    c.variant = Variant::Std;
    c.sharing = make_sharing(Variant::Std, 4, 2);
    CHECK_NOTHROW(validate_stag(c));

    StagConfig bad = c;
    bad.A = 5;
    CHECK_THROWS_AS(validate_stag(bad), ConfigError);
    bad.A = -1;
    CHECK_THROWS_AS(validate_stag(bad), ConfigError);

    bad = c;
    bad.A = 1;  // std pins A = L/2
    bad.sharing = make_sharing(Variant::Std, 4, 1);
    CHECK_THROWS_AS(validate_stag(bad), ConfigError);

    bad = c;
    bad.variant = Variant::Sl;  // sl pins A = L/4
    CHECK_THROWS_AS(validate_stag(bad), ConfigError);

    bad = c;
    bad.sharing.d_groups = {{1, 2, 3}};  // block 4 unowned
    CHECK_THROWS_AS(validate_stag(bad), ConfigError);
    bad.sharing.d_groups = {{1, 2, 3, 4}, {4}};  // block 4 owned twice
    CHECK_THROWS_AS(validate_stag(bad), ConfigError);
    bad.sharing.d_groups = {{1, 2, 3, 4, 5}};  // out of range
    CHECK_THROWS_AS(validate_stag(bad), ConfigError);
    bad.sharing.d_groups = {{1, 2, 3, 4}, {}};  // empty group
    CHECK_THROWS_AS(validate_stag(bad), ConfigError);

    bad = c;
    bad.sharing.g_groups = {{2, 3, 4}};  // must partition A+1..L
    CHECK_THROWS_AS(validate_stag(bad), ConfigError);
}

TEST_CASE("group lookup returns the owning index") {
    const SharingMap m = make_sharing(Variant::Sl, 12, 3);
    CHECK(group_of(m.d_groups, 1) == 0);
    CHECK(group_of(m.d_groups, 3) == 0);
    CHECK(group_of(m.d_groups, 4) == 1);
    CHECK(group_of(m.d_groups, 12) == 3);
    CHECK(group_of(m.g_groups, 4) == 0);
    CHECK(group_of(m.g_groups, 12) == 2);
    CHECK_THROWS_AS(group_of(m.g_groups, 1), ContractError);
}

TEST_CASE("side parameter counts match the closed form") {
    StagConfig tiny;
    tiny.d = 8;
    tiny.d_prime = 4;
    tiny.L = 4;
    tiny.A = 2;
    tiny.variant = Variant::Std;
    tiny.sharing = make_sharing(Variant::Std, 4, 2);
    // P_D + P_G + P_U = 36 + 52 + 40
    CHECK(count_side_params(tiny) == 128);

    StagConfig reference;
    reference.d = 384;
    reference.d_prime = 192;
    reference.L = 12;
    reference.A = 6;
    reference.variant = Variant::Std;
    reference.sharing = make_sharing(Variant::Std, 12, 6);
    CHECK(count_side_params(reference) == 258816);

    StagConfig sl = reference;
    sl.variant = Variant::Sl;
    sl.A = 3;
    sl.sharing = make_sharing(Variant::Sl, 12, 3);
    CHECK(count_side_params(sl) == 850368);

    StagConfig simple = tiny;
    simple.refine_fn = RefineFn::SimpleGraphConv;
    CHECK(count_side_params(simple) == 36 + (2 * 16 + 4) + 40);
    StagConfig pool = tiny;
    pool.refine_fn = RefineFn::MaxPool;
    CHECK(count_side_params(pool) == 36 + 40);

    ParamStore store;
    RngStream rng(3, "side/init");
    add_side_params(store, tiny, rng);
    CHECK(store.count_elements(true) == 128);
}

TEST_CASE("side init: zero modulation weights, bounded down and refine weights") {
    StagConfig sc;
    sc.d = 16;
    sc.d_prime = 8;
    sc.L = 12;
    sc.A = 3;
    sc.variant = Variant::Sl;
    sc.sharing = make_sharing(Variant::Sl, 12, 3);
    ParamStore store;
    RngStream rng(11, "side/init");
    add_side_params(store, sc, rng);
    CHECK(store.size() == 4 * 2 + 3 * 4 + 3 * 2);  // D pairs, G quads, U pairs
    for (const Param& p : store.items()) {
        CHECK(p.tunable);
        CHECK(p.name.rfind("side/", 0) == 0);
        const bool is_u = p.name.rfind("side/U", 0) == 0;
        const bool is_bias = p.name.rfind("_b") == p.name.size() - 2;
        if (is_u || is_bias) {
            CHECK(p.value.max_abs() == 0.0);
        } else {
            const double bound = 1.0 / std::sqrt(static_cast<double>(p.value.rows()));
            for (std::size_t e = 0; e < p.value.size(); ++e) {
                CHECK(p.value.data()[e] >= -bound);
                CHECK(p.value.data()[e] <= bound);
            }
        }
    }
    // One record set per shared group, so blocks in a run alias the same name.
    CHECK(group_of(sc.sharing.d_groups, 1) == group_of(sc.sharing.d_groups, 3));
    CHECK(store.index_of("side/D3_w") >= 0);
    CHECK_THROWS_AS(store.index_of("side/D4_w"), ContractError);
}

TEST_CASE("down-projection accumulation on a worked row") {
    Tape tape(Precision::Double);
    Matrix d_w = col({1.0, 2.0});  // d = 2 down to d' = 1
    const NodeId t = tape.input(row({3.0, 4.0}));
    const NodeId w = tape.input(d_w, true);
    const NodeId b = tape.input(Matrix(1, 1), true);
    const NodeId x_prev = tape.input(row({5.0}));
    const NodeId x = tape.add(tape.linear(t, w, b), x_prev);
    CHECK(tape.value(x).at(0, 0) == doctest::Approx(16.0).epsilon(1e-14));
}

TEST_CASE("modulation adds the up-projection to the token row") {
    Tape tape(Precision::Double);
    const NodeId x = tape.input(row({3.0}));
    const NodeId u_w = tape.input(row({1.0, 2.0}), true);  // d' = 1 up to d = 2
    const NodeId u_b = tape.input(Matrix(1, 2), true);
    const NodeId t = tape.input(row({10.0, 20.0}));
    const NodeId out = tape.add(tape.linear(x, u_w, u_b), t);
    CHECK(tape.value(out).at(0, 0) == doctest::Approx(13.0).epsilon(1e-14));
    CHECK(tape.value(out).at(0, 1) == doctest::Approx(26.0).epsilon(1e-14));
}

TEST_CASE("refinement reduces to the neighbor maximum under identity settings") {
    const NeighborGraph g = chain3();
    const Matrix h = col({1.0, 5.0, 3.0});

    SUBCASE("efficient edge conv with W' = 0, W2 = I, identity phi") {
        Tape tape(Precision::Double);
        const NodeId hn = tape.input(h);
        const NodeId wp = tape.input(Matrix(1, 1), true);
        const NodeId w2 = tape.input(Matrix::identity(1), true);
        const NodeId phi_w = tape.input(Matrix::identity(1), true);
        const NodeId phi_b = tape.input(Matrix(1, 1), true);
        const NodeId out = efficient_edgeconv(tape, hn, g, wp, w2, phi_w, phi_b);
        CHECK(tape.value(out).at(0, 0) == 5.0);
        CHECK(tape.value(out).at(1, 0) == 1.0);
        CHECK(tape.value(out).at(2, 0) == 5.0);
    }
    SUBCASE("bare neighborhood max pooling") {
        Tape tape(Precision::Double);
        const NodeId hn = tape.input(h);
        const NodeId out = max_pool_refine(tape, hn, g);
        CHECK(tape.value(out).at(0, 0) == 5.0);
        CHECK(tape.value(out).at(1, 0) == 1.0);
        CHECK(tape.value(out).at(2, 0) == 5.0);
    }
    SUBCASE("empty graph is rejected") {
        Tape tape(Precision::Double);
        const NodeId hn = tape.input(h);
        NeighborGraph empty;
        empty.n = 3;
        empty.k = 0;
        CHECK_THROWS_AS(max_pool_refine(tape, hn, empty), DataError);
    }
}

TEST_CASE("efficient and original edge conv agree on random instances") {
    RngStream rng(71, "test/edgeconv-agree");
    for (int inst = 0; inst < 5; ++inst) {
        const int n = 5 + inst;
        const int dp = 2 + inst % 3;
        const int k = 1 + inst % 3;
        RngStream r = rng.derive("inst" + std::to_string(inst));
        const Matrix pts = Matrix::uniform(r, n, 3, -1.0, 1.0);
        PatchCenters pc;
        pc.centers = pts;
        const NeighborGraph g = knn_graph(pc, k);
        const Matrix h = Matrix::uniform(r, n, dp, -1.0, 1.0);
        const Matrix w1 = Matrix::uniform(r, dp, dp, -1.0, 1.0);
        const Matrix w2 = Matrix::uniform(r, dp, dp, -1.0, 1.0);
        const Matrix phi_w = Matrix::uniform(r, dp, dp, -1.0, 1.0);
        const Matrix phi_b = Matrix::uniform(r, 1, dp, -1.0, 1.0);

        Matrix stacked(2 * dp, dp);
        for (int i = 0; i < dp; ++i)
            for (int j = 0; j < dp; ++j) {
                stacked.at(i, j) = w1.at(i, j);
                stacked.at(dp + i, j) = w2.at(i, j);
            }
        Matrix w_prime = w1;
        for (std::size_t e = 0; e < w_prime.size(); ++e) w_prime.data()[e] -= w2.data()[e];

        Tape t_orig(Precision::Double);
        const NodeId o = original_edgeconv(t_orig, t_orig.input(h), g, t_orig.input(stacked, true),
                                           t_orig.input(phi_w, true), t_orig.input(phi_b, true));
        Tape t_eff(Precision::Double);
        const NodeId e =
            efficient_edgeconv(t_eff, t_eff.input(h), g, t_eff.input(w_prime, true),
                               t_eff.input(w2, true), t_eff.input(phi_w, true),
                               t_eff.input(phi_b, true));
        CHECK(t_orig.value(o).max_abs_diff(t_eff.value(e)) <= 1e-12);
    }
}

TEST_CASE("side pipeline matches an unrolled straight-line reference") {
    BackboneConfig bb;
    bb.d = 8;
    bb.L = 4;
    bb.n = 6;
    bb.heads = 2;
    bb.mlp_ratio = 4;
    bb.group_size = 4;

    RngStream geo(17, "test/side-geom");
    std::vector<Matrix> groups;
    for (int i = 0; i < bb.n; ++i) groups.push_back(Matrix::uniform(geo, bb.group_size, 3, -1, 1));
    const Matrix centers = Matrix::uniform(geo, bb.n, 3, -1.0, 1.0);
    PatchCenters pc;
    pc.centers = centers;
    const NeighborGraph graph = knn_graph(pc, 2);

    const auto run_case = [&](const StagConfig& sc, std::uint64_t seed) {
        ParamStore store;
        RngStream brng(seed, "bb/init");
        add_backbone_params(store, bb, brng, false);
        RngStream srng(seed, "side/init");
        add_side_params(store, sc, srng);
        randomize_side(store, seed + 1);

        Tape tape(Precision::Double);
        Binding bind(tape, store);
        const NodeId out = stag_forward(tape, bind, bb, sc, groups, centers, graph);
        const Matrix ref = ref_stag_pipeline(store, bb, sc, groups, centers, graph);
        CHECK(tape.value(out).rows() == bb.n);
        CHECK(tape.value(out).cols() == bb.d);
        CHECK(tape.value(out).max_abs_diff(ref) <= 1e-10);
    };

    SUBCASE("custom variant, one accumulation block") {
        StagConfig sc;
        sc.d = 8;
        sc.d_prime = 4;
        sc.L = 4;
        sc.A = 1;
        sc.k = 2;
        sc.variant = Variant::Custom;
        sc.sharing = make_sharing(Variant::Custom, 4, 1);
        run_case(sc, 101);
    }
    SUBCASE("layer-specialized sharing at the same depth") {
        StagConfig sc;
        sc.d = 8;
        sc.d_prime = 4;
        sc.L = 4;
        sc.A = 1;
        sc.k = 2;
        sc.variant = Variant::Sl;
        sc.sharing = make_sharing(Variant::Sl, 4, 1);
        run_case(sc, 202);
    }
    SUBCASE("standard sharing, half accumulation") {
        StagConfig sc;
        sc.d = 8;
        sc.d_prime = 4;
        sc.L = 4;
        sc.A = 2;
        sc.k = 2;
        sc.variant = Variant::Std;
        sc.sharing = make_sharing(Variant::Std, 4, 2);
        run_case(sc, 303);
    }
}

TEST_CASE("side pipeline rejects mismatched backbone settings") {
    BackboneConfig bb;
    bb.d = 8;
    bb.L = 4;
    bb.n = 4;
    bb.heads = 2;
    bb.group_size = 4;
    StagConfig sc;
    sc.d = 16;  // disagrees with bb.d
    sc.d_prime = 4;
    sc.L = 4;
    sc.A = 2;
    sc.variant = Variant::Std;
    sc.sharing = make_sharing(Variant::Std, 4, 2);

    ParamStore store;
    RngStream rng(1, "bb/init");
    add_backbone_params(store, bb, rng, false);
    add_side_params(store, sc, rng);
    Tape tape(Precision::Double);
    Binding bind(tape, store);
    std::vector<Matrix> groups(4, Matrix(4, 3));
    NeighborGraph g;
    g.n = 4;
    g.k = 1;
    g.indices = {1, 0, 1, 2};
    CHECK_THROWS_AS(stag_forward(tape, bind, bb, sc, groups, Matrix(4, 3), g), ConfigError);
}
