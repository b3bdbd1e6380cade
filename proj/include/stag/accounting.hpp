#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stag/adapter.hpp"
#include "stag/backbone.hpp"
#include "stag/training.hpp"

namespace stag {

// Per-scope analytic FLOP tallies under the shared convention: only matrix
// products count, one multiply-accumulate is 2 FLOPs, and a product's
// backward cost is its forward cost times the number of operands receiving a
// gradient. Scope keys match the tape builders' scopes exactly, which is what
// makes tape-vs-analytic agreement an equality test rather than a tolerance.
struct FlopLedger {
    std::map<std::string, std::int64_t> forward;
    std::map<std::string, std::int64_t> backward;

    std::int64_t forward_total() const;
    std::int64_t backward_total() const;
    // Sum of backward entries whose scope sits inside "block{l}/".
    std::int64_t backward_for_block(int l) const;
};

struct CostReport {
    std::string strategy;
    std::int64_t tunable_params = 0;
    std::int64_t forward_flops = 0;
    std::int64_t backward_flops = 0;
    std::vector<std::int64_t> backward_flops_by_block;  // index l-1 for block l
    std::int64_t est_memory_bytes = 0;
};

std::int64_t count_backbone_params(const BackboneConfig& bb);

// Closed-form tunable count for a strategy. The stag configuration is only
// consulted by side-tuned strategies.
std::int64_t count_tunable_params(const BackboneConfig& bb, const StagConfig& stag,
                                  int num_classes, Strategy strategy);

FlopLedger count_flops(const BackboneConfig& bb, const StagConfig& stag, int num_classes,
                       Strategy strategy);

// bytes = all params + Adam moments and gradients on the tunable subset +
// activations saved by layers that participate in backward.
std::int64_t estimate_memory(const BackboneConfig& bb, const StagConfig& stag, int num_classes,
                             Strategy strategy, Precision prec);

CostReport cost_report(const BackboneConfig& bb, const StagConfig& stag, int num_classes,
                       Strategy strategy, Precision prec);

std::string cost_table_csv(const std::vector<CostReport>& rows);
std::string cost_table_text(const std::vector<CostReport>& rows);

// Transform-stage cost per point (phi excluded): the efficient form pays two
// d' x d' projections per point; the per-edge form pays a 2d' x d' projection
// per edge, k times per point. Their ratio is exactly k.
std::int64_t edgeconv_transform_flops_per_point(int d_prime, int k, bool efficient);

}  // namespace stag
