#pragma once

#include <string>
#include <vector>

#include "stag/backbone.hpp"
#include "stag/geometry.hpp"
#include "stag/params.hpp"
#include "stag/tape.hpp"

namespace stag {

enum class Variant { Std, Sl, Custom };
enum class RefineFn { EfficientEdgeConv, OriginalEdgeConv, SimpleGraphConv, MaxPool };

Variant variant_from_string(const std::string& s);
RefineFn refine_from_string(const std::string& s);
std::string to_string(Variant v);
std::string to_string(RefineFn f);

// Which block indices share one parameter set, per layer type. D groups
// partition blocks 1..L; G and U groups partition the M-blocks A+1..L.
struct SharingMap {
    std::vector<std::vector<int>> d_groups;
    std::vector<std::vector<int>> g_groups;
    std::vector<std::vector<int>> u_groups;
};

struct StagConfig {
    int d = 32;
    int d_prime = 16;
    int L = 4;
    int A = 2;
    int k = 8;
    Variant variant = Variant::Std;
    RefineFn refine_fn = RefineFn::EfficientEdgeConv;
    SharingMap sharing;
};

// std: A = L/2, one group per layer type spanning all instances.
// sl: A = L/4 rounded down (at least 1 kept below L), consecutive runs of 3.
// custom: caller-chosen A; spanning groups unless a map is supplied later.
SharingMap make_sharing(Variant v, int L, int A);
int default_A(Variant v, int L);
void validate_stag(const StagConfig& cfg);

// Group index owning block l, or a contract error if the map misses it.
int group_of(const std::vector<std::vector<int>>& groups, int l);

// D, W', W2, phi fan-uniform; U exactly zero so the initial side network is
// an exact identity on the token stream. One record set per shared group.
void add_side_params(ParamStore& store, const StagConfig& cfg, RngStream& rng);

std::int64_t count_side_params(const StagConfig& cfg);

// Refinement functions on raw tape nodes. Edge activations use the leaky
// rectifier (slope 0.2) before max-pooling; phi is a linear map. Transform
// matmuls are scoped "transform" and phi is scoped "phi" so their costs can
// be read back separately.
NodeId efficient_edgeconv(Tape& tape, NodeId h, const NeighborGraph& graph, NodeId w_prime,
                          NodeId w2, NodeId phi_w, NodeId phi_b);
NodeId original_edgeconv(Tape& tape, NodeId h, const NeighborGraph& graph, NodeId w,
                         NodeId phi_w, NodeId phi_b);
NodeId simple_graph_conv(Tape& tape, NodeId h, const NeighborGraph& graph, NodeId w,
                         NodeId phi_w, NodeId phi_b);
NodeId max_pool_refine(Tape& tape, NodeId h, const NeighborGraph& graph);

// The configured refinement for the group owning block l.
NodeId refine_forward(Tape& tape, Binding& bind, const StagConfig& cfg, int block_index, NodeId h,
                      const NeighborGraph& graph);

// Full side-tuned pipeline: for each block, run the frozen block; A-blocks
// accumulate D(T^{l-1}) into the side state; M-blocks accumulate, refine over
// the neighbor graph, and add U(X^l) back into the token stream.
NodeId stag_forward(Tape& tape, Binding& bind, const BackboneConfig& bb, const StagConfig& cfg,
                    const std::vector<Matrix>& groups, const Matrix& centers,
                    const NeighborGraph& graph);

}  // namespace stag
