#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "stag/matrix.hpp"

namespace stag {

using NodeId = std::int32_t;
constexpr NodeId kNoNode = -1;

enum class Op : std::uint8_t {
    Input,
    MatMul,
    MatMulNT,
    AddBias,
    Add,
    Sub,
    Mul,
    Scale,
    LeakyRelu,
    RowSoftmax,
    LayerNorm,
    RowMaxPool,
    RowMeanPool,
    GatherRows,
    SegmentMaxPool,
    ConcatCols,
    SliceCols,
    MaxElem,
    Sum,
    CrossEntropyLogits,
};

const char* op_name(Op op);

// Reverse-mode tape. Nodes are appended in construction order, which is by
// definition a topological order, so backward() is a single descending index
// sweep over the subgraph that can influence the loss.
//
// The central contract is gradient elision: requires_grad propagates from
// tunable inputs, and backward() never visits a node whose requires_grad is
// false. The visit log and per-scope FLOP tallies make that property (and the
// cost of backpropagation) checkable from the outside.
//
// One tape per training step; a tape is single-writer.
class Tape {
public:
    explicit Tape(Precision prec = Precision::Double) : precision_(prec) {
        scope_names_.push_back("");
    }

    Precision precision() const { return precision_; }

    // Labels every node created while alive; nests as "outer/inner".
    class Scope {
    public:
        Scope(Tape& tape, const std::string& name);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape& tape_;
        std::uint32_t saved_;
    };

    NodeId input(Matrix value, bool requires_grad = false);

    NodeId matmul(NodeId a, NodeId b);
    NodeId matmul_nt(NodeId a, NodeId b);  // a times b-transpose
    NodeId add_bias(NodeId x, NodeId bias);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId x, double c);
    NodeId leaky_relu(NodeId x, double slope = 0.2);
    NodeId row_softmax(NodeId x);
    NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5);
    NodeId row_max_pool(NodeId x);
    NodeId row_mean_pool(NodeId x);
    NodeId gather_rows(NodeId x, const std::vector<int>& indices);
    NodeId segment_max_pool(NodeId x, int segment_len);
    NodeId concat_cols(NodeId a, NodeId b);
    NodeId slice_cols(NodeId x, int j0, int j1);
    NodeId max_elem(NodeId a, NodeId b);
    NodeId sum(NodeId x);
    NodeId cross_entropy_logits(NodeId logits, int label);

    // x (n x p) times w (p x q), plus per-row bias when bias != kNoNode.
    // Checks inputs for non-finite values.
    NodeId linear(NodeId x, NodeId w, NodeId bias = kNoNode);

    // Populates grads for every requires_grad node on a path from a tunable
    // input to the loss. With elide true (the default) the traversal never
    // enters a node whose requires_grad is false; with elide false the whole
    // ancestor cone of the loss is visited, which must not change any
    // tunable gradient.
    void backward(NodeId loss, bool elide = true);

    const Matrix& value(NodeId id) const { return node(id).value; }
    bool has_grad(NodeId id) const { return !node(id).grad.empty(); }
    const Matrix& grad(NodeId id) const;
    bool requires_grad(NodeId id) const { return node(id).requires_grad; }
    Op op(NodeId id) const { return node(id).op; }
    const std::string& scope_of(NodeId id) const { return scope_names_[node(id).scope]; }
    std::size_t node_count() const { return nodes_.size(); }

    const std::vector<NodeId>& backward_visits() const { return visits_; }

    // FLOP convention: only matrix products count, 1 multiply-accumulate =
    // 2 FLOPs. Backward cost of a product is its forward cost times the
    // number of operands that receive a gradient.
    std::int64_t forward_flops() const;
    std::map<std::string, std::int64_t> forward_flops_by_scope() const;
    std::int64_t measured_backward_flops() const { return backward_flops_; }
    const std::map<std::string, std::int64_t>& measured_backward_flops_by_scope() const {
        return backward_by_scope_;
    }
    // Total value elements of nodes visited by the last backward().
    std::int64_t visited_value_elements() const;

private:
    struct Node {
        Op op = Op::Input;
        std::uint8_t nparents = 0;
        bool requires_grad = false;
        std::uint32_t scope = 0;
        std::array<NodeId, 3> parents{kNoNode, kNoNode, kNoNode};
        std::int64_t fwd_flops = 0;
        Matrix value;
        Matrix grad;
        double xparam = 0.0;
        int i0 = 0;
        int i1 = 0;
        std::vector<int> indices;
        Matrix saved1;
        Matrix saved2;
    };

    Node& node(NodeId id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }

    NodeId push(Node n);
    void accumulate(NodeId id, const Matrix& contribution);
    void backprop_node(NodeId id, const std::vector<char>& marked);

    Precision precision_;
    std::vector<Node> nodes_;
    std::vector<std::string> scope_names_;
    std::map<std::string, std::uint32_t> scope_ids_;
    std::uint32_t current_scope_ = 0;
    std::vector<NodeId> visits_;
    std::int64_t backward_flops_ = 0;
    std::map<std::string, std::int64_t> backward_by_scope_;
};

// Central finite differences (f(t+eps e) - f(t-eps e)) / (2 eps) per entry.
// f must be deterministic; this is checked by evaluating f twice up front.
Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& theta,
                        double eps);

}  // namespace stag
