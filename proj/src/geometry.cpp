#include "stag/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "stag/error.hpp"

namespace stag {

namespace {

double dist2(const Matrix& a, int i, const Matrix& b, int j) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c) {
        const double d = a.at(i, c) - b.at(j, c);
        s += d * d;
    }
    return s;
}

void check_points(const Matrix& points, const char* where) {
    if (points.cols() != 3) throw DimensionError(std::string(where) + ": points must be m x 3");
    if (points.rows() < 1) throw DataError(std::string(where) + ": empty cloud");
}

// (distance, index) ascending; index breaks ties.
std::vector<int> nearest_sorted(const Matrix& points, double cx, double cy, double cz) {
    std::vector<std::pair<double, int>> order(points.rows());
    for (int i = 0; i < points.rows(); ++i) {
        const double dx = points.at(i, 0) - cx;
        const double dy = points.at(i, 1) - cy;
        const double dz = points.at(i, 2) - cz;
        order[i] = {dx * dx + dy * dy + dz * dz, i};
    }
    std::sort(order.begin(), order.end());
    std::vector<int> idx(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) idx[i] = order[i].second;
    return idx;
}

}  // namespace

PointCloud normalize_cloud(const PointCloud& cloud) {
    check_points(cloud.points, "normalize_cloud");
    const Matrix& p = cloud.points;
    const int m = p.rows();
    if (m < 2) throw DataError("normalize_cloud: need at least 2 points");
    double cx = 0.0, cy = 0.0, cz = 0.0;
    for (int i = 0; i < m; ++i) {
        cx += p.at(i, 0);
        cy += p.at(i, 1);
        cz += p.at(i, 2);
    }
    cx /= m;
    cy /= m;
    cz /= m;
    double max2 = 0.0;
    for (int i = 0; i < m; ++i) {
        const double dx = p.at(i, 0) - cx;
        const double dy = p.at(i, 1) - cy;
        const double dz = p.at(i, 2) - cz;
        max2 = std::max(max2, dx * dx + dy * dy + dz * dz);
    }
    if (max2 == 0.0) throw DataError("normalize_cloud: degenerate cloud (all points identical)");
    const double inv = 1.0 / std::sqrt(max2);
    PointCloud out;
    out.label = cloud.label;
    out.source_id = cloud.source_id;
    out.points = Matrix(m, 3, p.precision());
    for (int i = 0; i < m; ++i) {
        out.points.at(i, 0) = (p.at(i, 0) - cx) * inv;
        out.points.at(i, 1) = (p.at(i, 1) - cy) * inv;
        out.points.at(i, 2) = (p.at(i, 2) - cz) * inv;
    }
    out.points.apply_precision();
    return out;
}

PointCloud augment(const PointCloud& cloud, RngStream& rng) {
    check_points(cloud.points, "augment");
    double s[3], t[3];
    for (double& v : s) v = rng.uniform(0.67, 1.5);
    for (double& v : t) v = rng.uniform(-0.2, 0.2);
    PointCloud out;
    out.label = cloud.label;
    out.source_id = cloud.source_id;
    const Matrix& p = cloud.points;
    out.points = Matrix(p.rows(), 3, p.precision());
    for (int i = 0; i < p.rows(); ++i)
        for (int c = 0; c < 3; ++c) out.points.at(i, c) = p.at(i, c) * s[c] + t[c];
    out.points.apply_precision();
    return out;
}

PatchCenters farthest_point_sample(const Matrix& points, int n, RngStream& rng,
                                   bool deterministic) {
    check_points(points, "farthest_point_sample");
    const int m = points.rows();
    if (n < 1 || n > m)
        throw ContractError("farthest_point_sample: sample size must be in [1, point count]");
    const int seed = deterministic ? 0 : static_cast<int>(rng.uniform_index(m));
    std::vector<int> chosen;
    chosen.reserve(n);
    chosen.push_back(seed);
    std::vector<double> min_d2(m);
    for (int i = 0; i < m; ++i) min_d2[i] = dist2(points, i, points, seed);
    while (static_cast<int>(chosen.size()) < n) {
        int best = 0;
        for (int i = 1; i < m; ++i)
            if (min_d2[i] > min_d2[best]) best = i;
        chosen.push_back(best);
        for (int i = 0; i < m; ++i) min_d2[i] = std::min(min_d2[i], dist2(points, i, points, best));
    }
    PatchCenters out;
    out.indices = std::move(chosen);
    out.centers = Matrix(n, 3, points.precision());
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) out.centers.at(i, c) = points.at(out.indices[i], c);
    return out;
}

std::vector<Matrix> knn_group(const Matrix& points, const PatchCenters& centers, int group_size) {
    check_points(points, "knn_group");
    if (group_size < 1 || group_size > points.rows())
        throw ContractError("knn_group: group_size must be in [1, point count]");
    std::vector<Matrix> groups;
    groups.reserve(centers.centers.rows());
    for (int ci = 0; ci < centers.centers.rows(); ++ci) {
        const double cx = centers.centers.at(ci, 0);
        const double cy = centers.centers.at(ci, 1);
        const double cz = centers.centers.at(ci, 2);
        const std::vector<int> order = nearest_sorted(points, cx, cy, cz);
        Matrix g(group_size, 3, points.precision());
        for (int r = 0; r < group_size; ++r) {
            g.at(r, 0) = points.at(order[r], 0) - cx;
            g.at(r, 1) = points.at(order[r], 1) - cy;
            g.at(r, 2) = points.at(order[r], 2) - cz;
        }
        g.apply_precision();
        groups.push_back(std::move(g));
    }
    return groups;
}

NeighborGraph knn_graph(const PatchCenters& centers, int k) {
    const Matrix& c = centers.centers;
    check_points(c, "knn_graph");
    const int n = c.rows();
    if (k < 1 || k > n - 1)
        throw ContractError("knn_graph: neighborhood too large (need 1 <= k <= n-1)");
    NeighborGraph g;
    g.n = n;
    g.k = k;
    g.indices.resize(static_cast<std::size_t>(n) * k);
    for (int i = 0; i < n; ++i) {
        std::vector<std::pair<double, int>> order;
        order.reserve(n - 1);
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            order.emplace_back(dist2(c, i, c, j), j);
        }
        std::sort(order.begin(), order.end());
        for (int j = 0; j < k; ++j) g.indices[static_cast<std::size_t>(i) * k + j] = order[j].second;
    }
    return g;
}

}  // namespace stag
