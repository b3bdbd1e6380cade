#pragma once

#include <string>
#include <vector>

#include "stag/geometry.hpp"
#include "stag/rng.hpp"

namespace stag {

struct Dataset {
    std::vector<PointCloud> clouds;        // normalized, labels assigned
    std::vector<std::string> label_names;  // index = lexicographic rank
};

// Surface-sampled primitives with per-sample shape jitter, a uniform random
// rotation, and Gaussian coordinate noise. Writes one text cloud per sample
// ("x y z" per line, six decimals) plus manifest.tsv mapping relative path to
// label name. Byte-identical for identical streams.
void generate_synthetic(const std::string& out_dir, const std::vector<std::string>& classes,
                        int per_class, int points, double noise_sigma, RngStream rng);

// Parses a manifest and its cloud files, normalizes every cloud, and assigns
// label indices by lexicographic label-name order.
Dataset load_dataset(const std::string& manifest_path);

}  // namespace stag
