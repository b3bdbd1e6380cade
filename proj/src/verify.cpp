#include "stag/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "stag/accounting.hpp"
#include "stag/adapter.hpp"
#include "stag/backbone.hpp"
#include "stag/error.hpp"
#include "stag/geometry.hpp"
#include "stag/params.hpp"
#include "stag/tape.hpp"
#include "stag/training.hpp"

namespace stag {

namespace {

SuiteResult pass(const std::string& name) { return {name, true, ""}; }
SuiteResult fail(const std::string& name, const std::string& detail) {
    return {name, false, detail};
}

Matrix stack_rows(const Matrix& top, const Matrix& bottom) {
    Matrix out(top.rows() + bottom.rows(), top.cols(), top.precision());
    for (int i = 0; i < top.rows(); ++i)
        for (int j = 0; j < top.cols(); ++j) out.at(i, j) = top.at(i, j);
    for (int i = 0; i < bottom.rows(); ++i)
        for (int j = 0; j < bottom.cols(); ++j) out.at(top.rows() + i, j) = bottom.at(i, j);
    return out;
}

PatchCenters centers_of(const Matrix& points) {
    PatchCenters pc;
    pc.centers = points;
    pc.indices.resize(static_cast<std::size_t>(points.rows()));
    std::iota(pc.indices.begin(), pc.indices.end(), 0);
    return pc;
}

// One fixed patch pipeline for a model, from a synthetic Gaussian cloud.
SamplePipeline make_sample(const Model& model, std::uint64_t seed, int label) {
    RngStream rng(seed, "verify/sample");
    const int m = 4 * std::max(model.bb.n, model.bb.group_size);
    PointCloud cloud;
    cloud.points = Matrix(m, 3);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < 3; ++j) cloud.points.at(i, j) = rng.normal();
    cloud.label = label;
    cloud = normalize_cloud(cloud);
    SamplePipeline s = prepare_sample(cloud, model, nullptr, true);
    s.label = label;
    return s;
}

void randomize_tunables(Model& model, std::uint64_t seed) {
    RngStream rng(seed, "verify/randomize");
    for (const Param& p : model.store.items()) {
        if (!p.tunable) continue;
        RngStream prng = rng.derive(p.name);
        model.store.at(p.name).value =
            Matrix::uniform(prng, p.value.rows(), p.value.cols(), -0.5, 0.5);
    }
}

double eval_loss(const Model& model, const SamplePipeline& s, Precision prec) {
    Tape tape(prec);
    Binding bind(tape, model.store);
    const NodeId logits = forward_logits(tape, bind, model, s, nullptr, nullptr);
    const NodeId loss = tape.cross_entropy_logits(logits, s.label);
    return tape.value(loss).at(0, 0);
}

int block_index_of_scope(const std::string& scope) {
    if (scope.rfind("block", 0) != 0) return -1;
    std::size_t i = 5, v = 0;
    if (i >= scope.size() || !std::isdigit(static_cast<unsigned char>(scope[i]))) return -1;
    for (; i < scope.size() && std::isdigit(static_cast<unsigned char>(scope[i])); ++i)
        v = v * 10 + static_cast<std::size_t>(scope[i] - '0');
    if (i != scope.size() && scope[i] != '/') return -1;
    return static_cast<int>(v);
}

std::string diff_maps(const std::map<std::string, std::int64_t>& tape,
                      const std::map<std::string, std::int64_t>& analytic) {
    std::ostringstream ss;
    for (const auto& [k, v] : tape) {
        auto it = analytic.find(k);
        if (it == analytic.end())
            ss << " tape-only " << k << "=" << v << ";";
        else if (it->second != v)
            ss << " " << k << " tape=" << v << " analytic=" << it->second << ";";
    }
    for (const auto& [k, v] : analytic)
        if (!tape.count(k)) ss << " analytic-only " << k << "=" << v << ";";
    return ss.str();
}

}  // namespace

SuiteResult verify_edgeconv_equivalence(int instances, std::uint64_t seed) {
    const std::string name = "edgeconv_equivalence";
    RngStream master(seed, "verify/edgeconv");
    for (int inst = 0; inst < instances; ++inst) {
        RngStream rng = master.derive(std::to_string(inst));
        const int n = 4 + static_cast<int>(rng.uniform_index(29));          // <= 32
        const int dp = 1 + static_cast<int>(rng.uniform_index(16));         // <= 16
        const int k = 1 + static_cast<int>(rng.uniform_index(
                              static_cast<std::uint64_t>(std::min(8, n - 1))));
        const Matrix pts = Matrix::uniform(rng, n, 3, -1.0, 1.0);
        const NeighborGraph graph = knn_graph(centers_of(pts), k);
        for (Precision prec : {Precision::Double, Precision::Single}) {
            const Matrix h = Matrix::uniform(rng, n, dp, -1.0, 1.0, prec);
            const Matrix w1 = Matrix::uniform(rng, dp, dp, -1.0, 1.0, prec);
            const Matrix w2 = Matrix::uniform(rng, dp, dp, -1.0, 1.0, prec);
            const Matrix phi_w = Matrix::uniform(rng, dp, dp, -1.0, 1.0, prec);
            const Matrix phi_b = Matrix::uniform(rng, 1, dp, -1.0, 1.0, prec);
            Matrix w_prime(dp, dp, prec);
            for (int i = 0; i < dp; ++i)
                for (int j = 0; j < dp; ++j) w_prime.at(i, j) = w1.at(i, j) - w2.at(i, j);
            w_prime.apply_precision();
            const Matrix w_cat = stack_rows(w1, w2);

            Tape te(prec);
            const NodeId eff = efficient_edgeconv(te, te.input(h), graph, te.input(w_prime),
                                                  te.input(w2), te.input(phi_w), te.input(phi_b));
            Tape to(prec);
            const NodeId orig = original_edgeconv(to, to.input(h), graph, to.input(w_cat),
                                                  to.input(phi_w), to.input(phi_b));
            const double diff = te.value(eff).max_abs_diff(to.value(orig));
            const double tol = prec == Precision::Double ? 1e-12 : 1e-5;
            if (!(diff <= tol)) {
                std::ostringstream ss;
                ss << "instance " << inst << " (n=" << n << ", d'=" << dp << ", k=" << k
                   << ", precision=" << (prec == Precision::Double ? "double" : "single")
                   << "): max abs diff " << diff << " > " << tol;
                return fail(name, ss.str());
            }

            // Sensitivity check: W' = W1 is the wrong reduction and must not agree.
            Tape tm(prec);
            const NodeId mut = efficient_edgeconv(tm, tm.input(h), graph, tm.input(w1),
                                                  tm.input(w2), tm.input(phi_w), tm.input(phi_b));
            const double mdiff = tm.value(mut).max_abs_diff(to.value(orig));
            if (!(mdiff > 1e-6)) {
                std::ostringstream ss;
                ss << "instance " << inst << " (n=" << n << ", d'=" << dp << ", k=" << k
                   << "): corrupted W' still agrees (diff " << mdiff << ")";
                return fail(name, ss.str());
            }
        }
    }
    return pass(name);
}

SuiteResult verify_edgeconv_flop_ratio() {
    const std::string name = "edgeconv_flop_ratio";
    RngStream rng(17, "verify/flops");
    for (int k : {2, 4, 8, 16}) {
        for (int dp : {4, 16}) {
            const std::int64_t eff = edgeconv_transform_flops_per_point(dp, k, true);
            const std::int64_t orig = edgeconv_transform_flops_per_point(dp, k, false);
            if (eff != 4LL * dp * dp || orig != k * eff || orig % eff != 0 || orig / eff != k) {
                std::ostringstream ss;
                ss << "k=" << k << ", d'=" << dp << ": per-point transform FLOPs " << orig
                   << " vs " << eff << " (expected exact ratio " << k << ")";
                return fail(name, ss.str());
            }
            const int n = k + 4;
            const Matrix pts = Matrix::uniform(rng, n, 3, -1.0, 1.0);
            const NeighborGraph graph = knn_graph(centers_of(pts), k);
            const Matrix h = Matrix::uniform(rng, n, dp, -1.0, 1.0);
            const Matrix w1 = Matrix::uniform(rng, dp, dp, -1.0, 1.0);
            const Matrix w2 = Matrix::uniform(rng, dp, dp, -1.0, 1.0);
            const Matrix phi_w = Matrix::uniform(rng, dp, dp, -1.0, 1.0);
            const Matrix phi_b = Matrix::uniform(rng, 1, dp, -1.0, 1.0);

            Tape te;
            efficient_edgeconv(te, te.input(h), graph, te.input(w1), te.input(w2),
                               te.input(phi_w), te.input(phi_b));
            Tape to;
            original_edgeconv(to, to.input(h), graph, to.input(stack_rows(w1, w2)),
                              to.input(phi_w), to.input(phi_b));
            const std::int64_t te_meas = te.forward_flops_by_scope().at("transform");
            const std::int64_t to_meas = to.forward_flops_by_scope().at("transform");
            if (te_meas != n * eff || to_meas != n * orig) {
                std::ostringstream ss;
                ss << "k=" << k << ", d'=" << dp << ", n=" << n
                   << ": tape transform FLOPs (eff " << te_meas << ", orig " << to_meas
                   << ") disagree with analytic (" << n * eff << ", " << n * orig << ")";
                return fail(name, ss.str());
            }
        }
    }
    return pass(name);
}

SuiteResult verify_gradient_elision(int d, int L, const std::vector<int>& a_values) {
    const std::string name = "gradient_elision";
    BackboneConfig bb;
    bb.d = d;
    bb.L = L;
    bb.n = 16;
    bb.heads = 4;
    bb.mlp_ratio = 4;
    bb.group_size = 16;
    std::int64_t prev_backward = -1;
    for (std::size_t ai = 0; ai < a_values.size(); ++ai) {
        const int a = a_values[ai];
        StagConfig sc;
        sc.d = d;
        sc.d_prime = 16;
        sc.L = L;
        sc.A = a;
        sc.k = 8;
        sc.variant = Variant::Custom;
        sc.refine_fn = RefineFn::EfficientEdgeConv;
        sc.sharing = make_sharing(Variant::Custom, L, a);
        Model model = build_model(bb, sc, 4, Strategy::StagCustom, 7, 1);

        const SamplePipeline s = make_sample(model, 23, 2);
        Tape tape;
        Binding bind(tape, model.store);
        const NodeId logits = forward_logits(tape, bind, model, s, nullptr, nullptr);
        const NodeId loss = tape.cross_entropy_logits(logits, s.label);
        tape.backward(loss, true);

        for (const NodeId id : tape.backward_visits()) {
            const int bl = block_index_of_scope(tape.scope_of(id));
            if (bl >= 1 && bl <= a) {
                std::ostringstream ss;
                ss << "A=" << a << ": backward visited a node in scope "
                   << tape.scope_of(id) << " (block " << bl << " should be elided)";
                return fail(name, ss.str());
            }
        }

        const FlopLedger ledger = count_flops(bb, sc, 4, Strategy::StagCustom);
        if (tape.forward_flops_by_scope() != ledger.forward)
            return fail(name, "A=" + std::to_string(a) + ": forward tape/analytic mismatch:" +
                                  diff_maps(tape.forward_flops_by_scope(), ledger.forward));
        if (tape.measured_backward_flops_by_scope() != ledger.backward)
            return fail(name, "A=" + std::to_string(a) + ": backward tape/analytic mismatch:" +
                                  diff_maps(tape.measured_backward_flops_by_scope(),
                                            ledger.backward));

        const std::int64_t bwd = tape.measured_backward_flops();
        if (ai > 0 && !(bwd < prev_backward)) {
            std::ostringstream ss;
            ss << "backward FLOPs not strictly decreasing: A=" << a_values[ai - 1] << " gives "
               << prev_backward << ", A=" << a << " gives " << bwd;
            return fail(name, ss.str());
        }
        prev_backward = bwd;
    }
    return pass(name);
}

SuiteResult verify_finite_difference() {
    const std::string name = "finite_difference";
    BackboneConfig bb;
    bb.d = 8;
    bb.L = 4;
    bb.n = 8;
    bb.heads = 2;
    bb.mlp_ratio = 4;
    bb.group_size = 4;
    StagConfig sc;
    sc.d = 8;
    sc.d_prime = 4;
    sc.L = 4;
    sc.A = 2;
    sc.k = 2;
    sc.variant = Variant::Std;
    sc.refine_fn = RefineFn::EfficientEdgeConv;
    sc.sharing = make_sharing(Variant::Std, 4, 2);

    Model model = build_model(bb, sc, 4, Strategy::StagStd, 11, 3);
    randomize_tunables(model, 29);
    const SamplePipeline s = make_sample(model, 31, 1);

    Tape tape;
    Binding bind(tape, model.store);
    const NodeId logits = forward_logits(tape, bind, model, s, nullptr, nullptr);
    const NodeId loss = tape.cross_entropy_logits(logits, s.label);
    tape.backward(loss, true);

    const double eps = 1e-5;
    for (const Param& p : model.store.items()) {
        if (!p.tunable) continue;
        if (!bind.is_bound(p.name))
            return fail(name, "tunable parameter " + p.name + " never entered the graph");
        const NodeId pid = bind.bound(p.name);
        if (!tape.has_grad(pid))
            return fail(name, "tunable parameter " + p.name + " received no gradient");
        const Matrix ad = tape.grad(pid);
        Matrix& theta = model.store.at(p.name).value;
        const int size = static_cast<int>(theta.size());
        const int stride = std::max(1, size / 192);
        for (int e = 0; e < size; e += stride) {
            const double orig = theta.data()[e];
            theta.data()[e] = orig + eps;
            const double fp = eval_loss(model, s, Precision::Double);
            theta.data()[e] = orig - eps;
            const double fm = eval_loss(model, s, Precision::Double);
            theta.data()[e] = orig;
            const double fd = (fp - fm) / (2.0 * eps);
            const double a = ad.data()[e];
            const double err = std::abs(a - fd) / std::max(0.01, std::abs(a) + std::abs(fd));
            if (!(err <= 1e-4)) {
                std::ostringstream ss;
                ss << p.name << "[" << e << "]: autodiff " << a << " vs central difference "
                   << fd << " (relative error " << err << ")";
                return fail(name, ss.str());
            }
        }
    }
    return pass(name);
}

SuiteResult verify_init_identity() {
    const std::string name = "init_identity";
    BackboneConfig bb;
    bb.d = 16;
    bb.L = 4;
    bb.n = 16;
    bb.heads = 4;
    bb.mlp_ratio = 4;
    bb.group_size = 8;
    for (Variant variant : {Variant::Std, Variant::Sl}) {
        for (RefineFn fn : {RefineFn::EfficientEdgeConv, RefineFn::OriginalEdgeConv,
                            RefineFn::SimpleGraphConv, RefineFn::MaxPool}) {
            for (Precision prec : {Precision::Double, Precision::Single}) {
                StagConfig sc;
                sc.d = bb.d;
                sc.d_prime = 8;
                sc.L = bb.L;
                sc.A = default_A(variant, bb.L);
                sc.k = 4;
                sc.variant = variant;
                sc.refine_fn = fn;
                sc.sharing = make_sharing(variant, bb.L, sc.A);
                const Strategy strat =
                    variant == Variant::Std ? Strategy::StagStd : Strategy::StagSl;
                Model model = build_model(bb, sc, 4, strat, 5, 9);
                const SamplePipeline s = make_sample(model, 41, 0);

                Tape ts(prec);
                Binding bs(ts, model.store);
                const NodeId t_side = stag_forward(ts, bs, bb, sc, s.groups, s.centers, s.graph);
                const NodeId l_side = head_forward(ts, bs, t_side, nullptr, nullptr);

                Tape tb(prec);
                Binding bbind(tb, model.store);
                const NodeId t_bare = backbone_forward(tb, bbind, bb, s.groups, s.centers);
                const NodeId l_bare = head_forward(tb, bbind, t_bare, nullptr, nullptr);

                const double dt = ts.value(t_side).max_abs_diff(tb.value(t_bare));
                const double dl = ts.value(l_side).max_abs_diff(tb.value(l_bare));
                if (dt != 0.0 || dl != 0.0) {
                    std::ostringstream ss;
                    ss << to_string(variant) << "/" << to_string(fn) << "/"
                       << (prec == Precision::Double ? "double" : "single")
                       << ": init side network is not an identity (token diff " << dt
                       << ", logit diff " << dl << ")";
                    return fail(name, ss.str());
                }
            }
        }
    }
    return pass(name);
}

SuiteResult verify_lr_endpoints() {
    const std::string name = "lr_endpoints";
    const double lr_max = 5e-4, lr_min = 1e-6;
    for (int T : {1, 9, 99, 255}) {
        if (cosine_lr(0, T, lr_max, lr_min) != lr_max)
            return fail(name, "cosine_lr(0, " + std::to_string(T) + ") != lr_max exactly");
        if (cosine_lr(T, T, lr_max, lr_min) != lr_min)
            return fail(name, "cosine_lr(T, T) != lr_min exactly at T=" + std::to_string(T));
        for (int t = 1; t <= T; ++t)
            if (!(cosine_lr(t, T, lr_max, lr_min) < cosine_lr(t - 1, T, lr_max, lr_min)))
                return fail(name, "schedule not strictly decreasing at t=" + std::to_string(t) +
                                      ", T=" + std::to_string(T));
    }
    if (cosine_lr(0, 0, lr_max, lr_min) != lr_max)
        return fail(name, "single-epoch schedule must return lr_max");
    const double mid = cosine_lr(50, 100, lr_max, lr_min);
    if (std::abs(mid - 2.505e-4) > 1e-12)
        return fail(name, "midpoint lr " + std::to_string(mid) + " != 2.505e-4");
    return pass(name);
}

SuiteResult verify_geometry(std::uint64_t seed) {
    const std::string name = "geometry";
    RngStream master(seed, "verify/geometry");

    for (int inst = 0; inst < 40; ++inst) {
        RngStream rng = master.derive("norm/" + std::to_string(inst));
        const int m = 4 + static_cast<int>(rng.uniform_index(61));
        PointCloud cloud;
        cloud.points = Matrix::uniform(rng, m, 3, -5.0, 5.0);
        const PointCloud nc = normalize_cloud(cloud);
        double cx = 0, cy = 0, cz = 0, max_norm = 0;
        for (int i = 0; i < m; ++i) {
            cx += nc.points.at(i, 0);
            cy += nc.points.at(i, 1);
            cz += nc.points.at(i, 2);
            max_norm = std::max(max_norm, std::sqrt(nc.points.at(i, 0) * nc.points.at(i, 0) +
                                                    nc.points.at(i, 1) * nc.points.at(i, 1) +
                                                    nc.points.at(i, 2) * nc.points.at(i, 2)));
        }
        cx /= m;
        cy /= m;
        cz /= m;
        if (std::abs(cx) > 1e-5 || std::abs(cy) > 1e-5 || std::abs(cz) > 1e-5)
            return fail(name, "normalized centroid off origin at instance " +
                                  std::to_string(inst));
        if (std::abs(max_norm - 1.0) > 1e-5)
            return fail(name, "normalized max norm " + std::to_string(max_norm) + " != 1");
        const PointCloud again = normalize_cloud(nc);
        if (again.points.max_abs_diff(nc.points) > 1e-9)
            return fail(name, "normalization is not idempotent at instance " +
                                  std::to_string(inst));
    }

    {
        PointCloud flat;
        flat.points = Matrix::full(5, 3, 0.25);
        bool threw = false;
        try {
            normalize_cloud(flat);
        } catch (const DataError&) {
            threw = true;
        }
        if (!threw) return fail(name, "degenerate cloud did not raise a data error");
    }

    {
        RngStream rng = master.derive("augment");
        PointCloud ones;
        ones.points = Matrix::full(8, 3, 1.0);
        double lo = 1e9, hi = -1e9;
        for (int rep = 0; rep < 200; ++rep) {
            const PointCloud aug = augment(ones, rng);
            for (std::size_t e = 0; e < aug.points.size(); ++e) {
                lo = std::min(lo, aug.points.data()[e]);
                hi = std::max(hi, aug.points.data()[e]);
            }
        }
        if (lo < 0.47 - 1e-12 || hi > 1.7 + 1e-12)
            return fail(name, "augmented unit cloud left its support: observed [" +
                                  std::to_string(lo) + ", " + std::to_string(hi) + "]");
        if (lo > 0.62 || hi < 1.55)
            return fail(name, "augmentation never came near its support bounds");
    }

    for (int inst = 0; inst < 25; ++inst) {
        RngStream rng = master.derive("knn/" + std::to_string(inst));
        const int n = 4 + static_cast<int>(rng.uniform_index(61));
        const int k = 1 + static_cast<int>(
                              rng.uniform_index(static_cast<std::uint64_t>(std::min(8, n - 1))));
        const Matrix pts = Matrix::uniform(rng, n, 3, -2.0, 2.0);
        const NeighborGraph g = knn_graph(centers_of(pts), k);
        for (int i = 0; i < n; ++i) {
            std::vector<std::pair<double, int>> cand;
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                double d2 = 0;
                for (int c = 0; c < 3; ++c) {
                    const double t = pts.at(i, c) - pts.at(j, c);
                    d2 += t * t;
                }
                cand.emplace_back(d2, j);
            }
            std::sort(cand.begin(), cand.end());
            for (int j = 0; j < k; ++j)
                if (g.at(i, j) != cand[static_cast<std::size_t>(j)].second) {
                    std::ostringstream ss;
                    ss << "knn instance " << inst << " row " << i << " slot " << j << ": got "
                       << g.at(i, j) << ", brute force says "
                       << cand[static_cast<std::size_t>(j)].second;
                    return fail(name, ss.str());
                }
        }
    }

    for (int inst = 0; inst < 25; ++inst) {
        RngStream rng = master.derive("fps/" + std::to_string(inst));
        const int m = 4 + static_cast<int>(rng.uniform_index(37));
        const int n = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(m)));
        const Matrix pts = Matrix::uniform(rng, m, 3, -2.0, 2.0);
        const PatchCenters got = farthest_point_sample(pts, n, rng, true);

        // Independent greedy oracle, seed index 0, strict improvement on ties.
        std::vector<int> oracle = {0};
        std::vector<double> best(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) {
            double d2 = 0;
            for (int c = 0; c < 3; ++c) {
                const double t = pts.at(i, c) - pts.at(0, c);
                d2 += t * t;
            }
            best[static_cast<std::size_t>(i)] = d2;
        }
        while (static_cast<int>(oracle.size()) < n) {
            int arg = 0;
            for (int i = 1; i < m; ++i)
                if (best[static_cast<std::size_t>(i)] > best[static_cast<std::size_t>(arg)])
                    arg = i;
            oracle.push_back(arg);
            for (int i = 0; i < m; ++i) {
                double d2 = 0;
                for (int c = 0; c < 3; ++c) {
                    const double t = pts.at(i, c) - pts.at(arg, c);
                    d2 += t * t;
                }
                best[static_cast<std::size_t>(i)] =
                    std::min(best[static_cast<std::size_t>(i)], d2);
            }
        }
        if (got.indices != oracle) {
            std::ostringstream ss;
            ss << "fps instance " << inst << " (m=" << m << ", n=" << n
               << ") disagrees with the greedy oracle";
            return fail(name, ss.str());
        }
    }
    return pass(name);
}

SuiteResult verify_param_accounting() {
    const std::string name = "param_accounting";

    StagConfig tiny;
    tiny.d = 8;
    tiny.d_prime = 4;
    tiny.L = 4;
    tiny.A = 2;
    tiny.k = 2;
    tiny.variant = Variant::Std;
    tiny.sharing = make_sharing(Variant::Std, 4, 2);
    if (count_side_params(tiny) != 128)
        return fail(name, "tiny std side count " + std::to_string(count_side_params(tiny)) +
                              " != 128");

    StagConfig ref_std;
    ref_std.d = 384;
    ref_std.d_prime = 192;
    ref_std.L = 12;
    ref_std.A = 6;
    ref_std.k = 16;
    ref_std.variant = Variant::Std;
    ref_std.sharing = make_sharing(Variant::Std, 12, 6);
    if (count_side_params(ref_std) != 258816)
        return fail(name, "reference-scale std side count " +
                              std::to_string(count_side_params(ref_std)) + " != 258816");

    StagConfig ref_sl = ref_std;
    ref_sl.variant = Variant::Sl;
    ref_sl.A = 3;
    ref_sl.sharing = make_sharing(Variant::Sl, 12, 3);
    if (count_side_params(ref_sl) != 850368)
        return fail(name, "reference-scale sl side count " +
                              std::to_string(count_side_params(ref_sl)) + " != 850368");

    if (count_head_params(384, 15) != 266511)
        return fail(name, "head count at d=384, C=15 is " +
                              std::to_string(count_head_params(384, 15)) + " != 266511");

    BackboneConfig ref_bb;
    ref_bb.d = 384;
    ref_bb.L = 12;
    ref_bb.n = 128;
    ref_bb.heads = 6;
    ref_bb.mlp_ratio = 4;
    ref_bb.group_size = 32;
    const std::int64_t head_only =
        count_tunable_params(ref_bb, ref_std, 15, Strategy::HeadOnly);
    const std::int64_t stag_std =
        count_tunable_params(ref_bb, ref_std, 15, Strategy::StagStd);
    const std::int64_t stag_sl = count_tunable_params(ref_bb, ref_sl, 15, Strategy::StagSl);
    const std::int64_t full = count_tunable_params(ref_bb, ref_std, 15, Strategy::Full);
    if (stag_std != 525327)
        return fail(name, "reference-scale stag_std tunables " + std::to_string(stag_std) +
                              " != 525327");
    if (!(head_only < stag_std && stag_std < stag_sl && stag_sl < full)) {
        std::ostringstream ss;
        ss << "strategy ordering violated: head_only=" << head_only << ", stag_std=" << stag_std
           << ", stag_sl=" << stag_sl << ", full=" << full;
        return fail(name, ss.str());
    }

    BackboneConfig bb;
    bb.d = 8;
    bb.L = 4;
    bb.n = 8;
    bb.heads = 2;
    bb.mlp_ratio = 4;
    bb.group_size = 4;
    StagConfig sc = tiny;
    for (Strategy strat : {Strategy::Full, Strategy::HeadOnly, Strategy::StagStd}) {
        Model model = build_model(bb, sc, 4, strat, 7, 1);
        if (model.store.count_elements(true) != count_tunable_params(bb, sc, 4, strat)) {
            std::ostringstream ss;
            ss << to_string(strat) << ": store holds " << model.store.count_elements(true)
               << " tunable elements, closed form says "
               << count_tunable_params(bb, sc, 4, strat);
            return fail(name, ss.str());
        }
    }
    return pass(name);
}

SuiteResult verify_weight_roundtrip(const std::string& tmp_dir) {
    const std::string name = "weight_roundtrip";
    std::error_code ec;
    std::filesystem::create_directories(tmp_dir, ec);
    if (ec) return fail(name, "cannot create " + tmp_dir + ": " + ec.message());
    RngStream rng(53, "verify/weights");
    for (Precision prec : {Precision::Double, Precision::Single}) {
        std::vector<std::pair<std::string, Matrix>> records;
        records.emplace_back("side/D1_w", Matrix::uniform(rng, 5, 3, -2.0, 2.0, prec));
        records.emplace_back("side/U1_b", Matrix::uniform(rng, 1, 7, -2.0, 2.0, prec));
        records.emplace_back("head/l3_w", Matrix::uniform(rng, 4, 4, -2.0, 2.0, prec));
        const std::string path = tmp_dir + "/roundtrip.stagw1";
        save_params(path, records, prec);
        const auto loaded = load_params(path);
        if (loaded.size() != records.size())
            return fail(name, "record count changed across the round trip");
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (loaded[i].first != records[i].first)
                return fail(name, "record name changed: " + loaded[i].first);
            if (loaded[i].second.max_abs_diff(records[i].second) != 0.0)
                return fail(name, "record " + records[i].first +
                                      " changed value across the round trip");
        }
    }
    return pass(name);
}

std::vector<SuiteResult> run_verify(const std::string& tmp_dir) {
    std::vector<SuiteResult> results;
    const auto guard = [&results](const std::string& name, auto&& fn) {
        try {
            results.push_back(fn());
        } catch (const std::exception& e) {
            results.push_back(fail(name, std::string("exception: ") + e.what()));
        }
    };
    guard("edgeconv_equivalence", [] { return verify_edgeconv_equivalence(100, 2024); });
    guard("edgeconv_flop_ratio", [] { return verify_edgeconv_flop_ratio(); });
    guard("gradient_elision", [] { return verify_gradient_elision(32, 4, {0, 1, 2, 3}); });
    guard("finite_difference", [] { return verify_finite_difference(); });
    guard("init_identity", [] { return verify_init_identity(); });
    guard("lr_endpoints", [] { return verify_lr_endpoints(); });
    guard("geometry", [] { return verify_geometry(99); });
    guard("param_accounting", [] { return verify_param_accounting(); });
    guard("weight_roundtrip", [&] { return verify_weight_roundtrip(tmp_dir); });
    return results;
}

}  // namespace stag
