#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "stag/error.hpp"
#include "stag/geometry.hpp"

using namespace stag;

namespace {

PointCloud cloud_of(Matrix pts) {
    PointCloud c;
    c.points = std::move(pts);
    return c;
}

}  // namespace

TEST_CASE("normalize centers and rescales a segment") {
    const PointCloud nc =
        normalize_cloud(cloud_of(Matrix{{1.0, 0.0, 0.0}, {3.0, 0.0, 0.0}}));
    CHECK(nc.points.max_abs_diff(Matrix{{-1.0, 0.0, 0.0}, {1.0, 0.0, 0.0}}) < 1e-12);
}

TEST_CASE("normalize rejects degenerate clouds") {
    CHECK_THROWS_AS(normalize_cloud(cloud_of(Matrix{{1.0, 2.0, 3.0}})), DataError);
    CHECK_THROWS_AS(normalize_cloud(cloud_of(Matrix::full(6, 3, 0.5))), DataError);
}

TEST_CASE("normalize invariants on a random cloud") {
    RngStream rng(11, "geo");
    const PointCloud nc = normalize_cloud(cloud_of(Matrix::uniform(rng, 33, 3, -4.0, 9.0)));
    double cx = 0.0, cy = 0.0, cz = 0.0, max_norm = 0.0;
    for (int i = 0; i < 33; ++i) {
        cx += nc.points.at(i, 0);
        cy += nc.points.at(i, 1);
        cz += nc.points.at(i, 2);
        max_norm = std::max(max_norm, std::hypot(nc.points.at(i, 0), nc.points.at(i, 1),
                                                 nc.points.at(i, 2)));
    }
    CHECK(std::abs(cx / 33) < 1e-12);
    CHECK(std::abs(cy / 33) < 1e-12);
    CHECK(std::abs(cz / 33) < 1e-12);
    CHECK(max_norm == doctest::Approx(1.0).epsilon(1e-9));
    const PointCloud again = normalize_cloud(nc);
    CHECK(again.points.max_abs_diff(nc.points) < 1e-12);
}

TEST_CASE("augment applies scale then shift in the documented draw order") {
    RngStream rng(21, "aug");
    RngStream replay = rng;  // same state, replayed by hand
    const PointCloud aug = augment(cloud_of(Matrix{{1.0, 1.0, 1.0}, {-0.5, 0.25, 2.0}}), rng);
    const double sx = replay.uniform(0.67, 1.5), sy = replay.uniform(0.67, 1.5),
                 sz = replay.uniform(0.67, 1.5);
    const double tx = replay.uniform(-0.2, 0.2), ty = replay.uniform(-0.2, 0.2),
                 tz = replay.uniform(-0.2, 0.2);
    const Matrix expected{{1.0 * sx + tx, 1.0 * sy + ty, 1.0 * sz + tz},
                          {-0.5 * sx + tx, 0.25 * sy + ty, 2.0 * sz + tz}};
    CHECK(aug.points.max_abs_diff(expected) == 0.0);
}

TEST_CASE("augment worked example") {
    // scale (0.67, 1.5, 1.0) then shift (0.2, 0.0, -0.2) on the all-ones point.
    const double x = 1.0 * 0.67 + 0.2, y = 1.0 * 1.5 + 0.0, z = 1.0 * 1.0 - 0.2;
    CHECK(x == doctest::Approx(0.87));
    CHECK(y == doctest::Approx(1.5));
    CHECK(z == doctest::Approx(0.8));
}

TEST_CASE("fps picks the far point on a line") {
    const Matrix pts{{0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, {2.0, 0.0, 0.0}, {10.0, 0.0, 0.0}};
    RngStream rng(1, "fps");
    const PatchCenters pc = farthest_point_sample(pts, 2, rng, true);
    CHECK(pc.indices == std::vector<int>{0, 3});
    CHECK(pc.centers.at(1, 0) == 10.0);
    CHECK_THROWS_AS(farthest_point_sample(pts, 0, rng, true), ContractError);
    CHECK_THROWS_AS(farthest_point_sample(pts, 5, rng, true), ContractError);
}

TEST_CASE("fps covers every point when n equals m") {
    RngStream rng(13, "fps-cover");
    const Matrix pts = Matrix::uniform(rng, 17, 3, -1.0, 1.0);
    const PatchCenters pc = farthest_point_sample(pts, 17, rng, true);
    std::vector<int> sorted = pc.indices;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 17; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("fps random seeding stays within range and is reproducible per stream") {
    RngStream rng(19, "fps-rand");
    RngStream rng2(19, "fps-rand");
    const Matrix pts = Matrix::uniform(rng, 12, 3, -1.0, 1.0);
    Matrix pts2 = pts;
    const PatchCenters a = farthest_point_sample(pts, 5, rng, false);
    RngStream tmp(19, "fps-rand");
    Matrix::uniform(rng2, 12, 3, -1.0, 1.0);
    const PatchCenters b = farthest_point_sample(pts2, 5, rng2, false);
    CHECK(a.indices == b.indices);
    for (const int idx : a.indices) {
        CHECK(idx >= 0);
        CHECK(idx < 12);
    }
}

TEST_CASE("knn neighbors on a line with tie break") {
    const Matrix pts{{0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, {3.0, 0.0, 0.0}};
    PatchCenters pc;
    pc.centers = pts;
    pc.indices = {0, 1, 2};
    const NeighborGraph g = knn_graph(pc, 1);
    CHECK(g.at(0, 0) == 1);
    CHECK(g.at(1, 0) == 0);
    CHECK(g.at(2, 0) == 1);

    PatchCenters tie;
    tie.centers = Matrix{{0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, {-1.0, 0.0, 0.0}};
    tie.indices = {0, 1, 2};
    CHECK(knn_graph(tie, 1).at(0, 0) == 1);  // equidistant, lower index wins

    CHECK_THROWS_AS(knn_graph(pc, 0), ContractError);
    CHECK_THROWS_AS(knn_graph(pc, 3), ContractError);
}

TEST_CASE("knn_group gathers nearest points relative to each center") {
    const Matrix pts{{0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, {3.0, 0.0, 0.0}};
    PatchCenters pc;
    pc.centers = Matrix{{1.0, 0.0, 0.0}};
    pc.indices = {1};
    const std::vector<Matrix> groups = knn_group(pts, pc, 2);
    REQUIRE(groups.size() == 1);
    CHECK(groups[0].max_abs_diff(Matrix{{0.0, 0.0, 0.0}, {-1.0, 0.0, 0.0}}) == 0.0);
    CHECK_THROWS_AS(knn_group(pts, pc, 0), ContractError);
    CHECK_THROWS_AS(knn_group(pts, pc, 4), ContractError);
}
