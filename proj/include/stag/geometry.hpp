#pragma once

#include <string>
#include <vector>

#include "stag/matrix.hpp"
#include "stag/rng.hpp"

namespace stag {

struct PointCloud {
    Matrix points;  // m x 3
    int label = -1;
    std::string source_id;
};

// FPS output; centers are rows copied from the source cloud.
struct PatchCenters {
    Matrix centers;            // n x 3
    std::vector<int> indices;  // into the source cloud
};

// Row i holds the k nearest centers j != i, ties broken by ascending index.
struct NeighborGraph {
    int n = 0;
    int k = 0;
    std::vector<int> indices;  // flat n x k

    int at(int i, int j) const { return indices[static_cast<std::size_t>(i) * k + j]; }
    std::vector<int> row(int i) const {
        return std::vector<int>(indices.begin() + static_cast<std::size_t>(i) * k,
                                indices.begin() + static_cast<std::size_t>(i + 1) * k);
    }
};

// Gravity center to the origin, then uniform scale so the farthest point
// sits on the unit sphere.
PointCloud normalize_cloud(const PointCloud& cloud);

// Per-axis scale from U(0.67, 1.5) then per-axis shift from U(-0.2, 0.2);
// draw order is sx, sy, sz, tx, ty, tz.
PointCloud augment(const PointCloud& cloud, RngStream& rng);

// Greedy farthest point sampling. The seed index is drawn from rng, or fixed
// to 0 when deterministic is set; ties go to the lowest index.
PatchCenters farthest_point_sample(const Matrix& points, int n, RngStream& rng,
                                   bool deterministic = false);

// For each center, the group_size nearest cloud points (ties by index)
// expressed relative to that center.
std::vector<Matrix> knn_group(const Matrix& points, const PatchCenters& centers, int group_size);

NeighborGraph knn_graph(const PatchCenters& centers, int k);

}  // namespace stag
