#pragma once

#include <map>
#include <string>
#include <vector>

#include "stag/geometry.hpp"
#include "stag/params.hpp"
#include "stag/rng.hpp"
#include "stag/tape.hpp"

namespace stag {

struct BackboneConfig {
    int d = 32;
    int L = 4;
    int n = 16;
    int heads = 4;
    int mlp_ratio = 4;
    int group_size = 16;
};

void validate_backbone(const BackboneConfig& cfg);

struct TokenSet {
    Matrix tokens;  // n x d
    PatchCenters centers;
};

// Lazily creates one tape Input node per named parameter, so shared groups
// and repeated uses alias a single node and gradients accumulate across uses.
class Binding {
public:
    Binding(Tape& tape, const ParamStore& store) : tape_(&tape), store_(&store) {}

    NodeId operator()(const std::string& name) {
        const int idx = store_->index_of(name);
        auto it = bound_.find(idx);
        if (it != bound_.end()) return it->second;
        const Param& p = store_->at(idx);
        const NodeId id = tape_->input(p.value, p.tunable);
        bound_.emplace(idx, id);
        return id;
    }

    bool is_bound(const std::string& name) const {
        return bound_.count(store_->index_of(name)) != 0;
    }
    NodeId bound(const std::string& name) const { return bound_.at(store_->index_of(name)); }
    const std::map<int, NodeId>& all_bound() const { return bound_; }

private:
    Tape* tape_;
    const ParamStore* store_;
    std::map<int, NodeId> bound_;
};

// Tokenizer, positional embedding, L transformer blocks, and the final norm,
// with weights drawn fan-uniform (biases zero, norm scales one).
void add_backbone_params(ParamStore& store, const BackboneConfig& cfg, RngStream& rng,
                         bool tunable);

// Patches to initial tokens: shared point-wise 3 -> d/2 -> d map with a leaky
// rectifier, then max-pool over each patch.
NodeId tokenize_forward(Tape& tape, Binding& bind, const BackboneConfig& cfg,
                        const std::vector<Matrix>& groups);

// Two-layer 3 -> d -> d map of the patch centers; added at every block input.
NodeId posemb_forward(Tape& tape, Binding& bind, const BackboneConfig& cfg,
                      const Matrix& centers);

// Pre-norm block: T <- T + MHSA(LN(T + pos)); T <- T + MLP(LN(T)).
NodeId block_forward(Tape& tape, Binding& bind, const BackboneConfig& cfg, NodeId t, NodeId pos,
                     int block_index);

NodeId final_norm_forward(Tape& tape, Binding& bind, NodeId t);

// The bare frozen pipeline (no side network): tokens after the final norm.
NodeId backbone_forward(Tape& tape, Binding& bind, const BackboneConfig& cfg,
                        const std::vector<Matrix>& groups, const Matrix& centers);

}  // namespace stag
