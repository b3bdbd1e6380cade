#include "stag/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace stag {

const char* op_name(Op op) {
    switch (op) {
        case Op::Input: return "input";
        case Op::MatMul: return "matmul";
        case Op::MatMulNT: return "matmul_nt";
        case Op::AddBias: return "add_bias";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Scale: return "scale";
        case Op::LeakyRelu: return "leaky_relu";
        case Op::RowSoftmax: return "row_softmax";
        case Op::LayerNorm: return "layer_norm";
        case Op::RowMaxPool: return "row_max_pool";
        case Op::RowMeanPool: return "row_mean_pool";
        case Op::GatherRows: return "gather_rows";
        case Op::SegmentMaxPool: return "segment_max_pool";
        case Op::ConcatCols: return "concat_cols";
        case Op::SliceCols: return "slice_cols";
        case Op::MaxElem: return "max_elem";
        case Op::Sum: return "sum";
        case Op::CrossEntropyLogits: return "cross_entropy_logits";
    }
    return "?";
}

Tape::Scope::Scope(Tape& tape, const std::string& name) : tape_(tape), saved_(tape.current_scope_) {
    const std::string& outer = tape.scope_names_[saved_];
    std::string full = outer.empty() ? name : outer + "/" + name;
    auto it = tape.scope_ids_.find(full);
    if (it == tape.scope_ids_.end()) {
        tape.scope_names_.push_back(full);
        it = tape.scope_ids_.emplace(full, static_cast<std::uint32_t>(tape.scope_names_.size() - 1))
                 .first;
    }
    tape.current_scope_ = it->second;
}

Tape::Scope::~Scope() { tape_.current_scope_ = saved_; }

NodeId Tape::push(Node n) {
    n.scope = current_scope_;
    n.value.set_precision(precision_);
    n.value.apply_precision();
    if (n.op != Op::Input) {
        bool rg = false;
        for (int i = 0; i < n.nparents; ++i) rg = rg || node(n.parents[i]).requires_grad;
        n.requires_grad = rg;
    }
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

namespace {
void check_id(NodeId id, std::size_t count, const char* where) {
    if (id < 0 || static_cast<std::size_t>(id) >= count)
        throw IndexError(std::string(where) + ": node id out of range");
}
}  // namespace

NodeId Tape::input(Matrix value, bool requires_grad) {
    Node n;
    n.op = Op::Input;
    n.requires_grad = requires_grad;
    n.value = std::move(value);
    return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    check_id(a, nodes_.size(), "matmul");
    check_id(b, nodes_.size(), "matmul");
    Node n;
    n.op = Op::MatMul;
    n.nparents = 2;
    n.parents = {a, b, kNoNode};
    n.value = stag::matmul(node(a).value, node(b).value);
    n.fwd_flops = 2LL * node(a).value.rows() * node(a).value.cols() * node(b).value.cols();
    return push(std::move(n));
}

NodeId Tape::matmul_nt(NodeId a, NodeId b) {
    check_id(a, nodes_.size(), "matmul_nt");
    check_id(b, nodes_.size(), "matmul_nt");
    Node n;
    n.op = Op::MatMulNT;
    n.nparents = 2;
    n.parents = {a, b, kNoNode};
    n.value = stag::matmul_nt(node(a).value, node(b).value);
    n.fwd_flops = 2LL * node(a).value.rows() * node(a).value.cols() * node(b).value.rows();
    return push(std::move(n));
}

NodeId Tape::add_bias(NodeId x, NodeId bias) {
    check_id(x, nodes_.size(), "add_bias");
    check_id(bias, nodes_.size(), "add_bias");
    const Matrix& xv = node(x).value;
    const Matrix& bv = node(bias).value;
    if (bv.rows() != 1 || bv.cols() != xv.cols())
        throw DimensionError("add_bias: bias must be 1 x cols(x)");
    Node n;
    n.op = Op::AddBias;
    n.nparents = 2;
    n.parents = {x, bias, kNoNode};
    Matrix out(xv.rows(), xv.cols(), precision_);
    for (int i = 0; i < xv.rows(); ++i)
        for (int j = 0; j < xv.cols(); ++j) out.at(i, j) = xv.at(i, j) + bv.at(0, j);
    n.value = std::move(out);
    return push(std::move(n));
}

namespace {
Matrix elementwise(const Matrix& a, const Matrix& b, Precision prec, const char* where,
                   double (*f)(double, double)) {
    if (!a.same_shape(b)) throw DimensionError(std::string(where) + ": shape mismatch");
    Matrix out(a.rows(), a.cols(), prec);
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) out.at(i, j) = f(a.at(i, j), b.at(i, j));
    return out;
}
}  // namespace

NodeId Tape::add(NodeId a, NodeId b) {
    check_id(a, nodes_.size(), "add");
    check_id(b, nodes_.size(), "add");
    Node n;
    n.op = Op::Add;
    n.nparents = 2;
    n.parents = {a, b, kNoNode};
    n.value = elementwise(node(a).value, node(b).value, precision_, "add",
                          [](double x, double y) { return x + y; });
    return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
    check_id(a, nodes_.size(), "sub");
    check_id(b, nodes_.size(), "sub");
    Node n;
    n.op = Op::Sub;
    n.nparents = 2;
    n.parents = {a, b, kNoNode};
    n.value = elementwise(node(a).value, node(b).value, precision_, "sub",
                          [](double x, double y) { return x - y; });
    return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
    check_id(a, nodes_.size(), "mul");
    check_id(b, nodes_.size(), "mul");
    Node n;
    n.op = Op::Mul;
    n.nparents = 2;
    n.parents = {a, b, kNoNode};
    n.value = elementwise(node(a).value, node(b).value, precision_, "mul",
                          [](double x, double y) { return x * y; });
    return push(std::move(n));
}

NodeId Tape::scale(NodeId x, double c) {
    check_id(x, nodes_.size(), "scale");
    Node n;
    n.op = Op::Scale;
    n.nparents = 1;
    n.parents = {x, kNoNode, kNoNode};
    n.xparam = c;
    const Matrix& xv = node(x).value;
    Matrix out(xv.rows(), xv.cols(), precision_);
    for (int i = 0; i < xv.rows(); ++i)
        for (int j = 0; j < xv.cols(); ++j) out.at(i, j) = c * xv.at(i, j);
    n.value = std::move(out);
    return push(std::move(n));
}

NodeId Tape::leaky_relu(NodeId x, double slope) {
    check_id(x, nodes_.size(), "leaky_relu");
    Node n;
    n.op = Op::LeakyRelu;
    n.nparents = 1;
    n.parents = {x, kNoNode, kNoNode};
    n.xparam = slope;
    const Matrix& xv = node(x).value;
    Matrix out(xv.rows(), xv.cols(), precision_);
    for (int i = 0; i < xv.rows(); ++i)
        for (int j = 0; j < xv.cols(); ++j) {
            const double v = xv.at(i, j);
            out.at(i, j) = v > 0.0 ? v : slope * v;
        }
    n.value = std::move(out);
    return push(std::move(n));
}

NodeId Tape::row_softmax(NodeId x) {
    check_id(x, nodes_.size(), "row_softmax");
    Node n;
    n.op = Op::RowSoftmax;
    n.nparents = 1;
    n.parents = {x, kNoNode, kNoNode};
    const Matrix& xv = node(x).value;
    Matrix out(xv.rows(), xv.cols(), precision_);
    for (int i = 0; i < xv.rows(); ++i) {
        double m = xv.at(i, 0);
        for (int j = 1; j < xv.cols(); ++j) m = std::max(m, xv.at(i, j));
        double s = 0.0;
        for (int j = 0; j < xv.cols(); ++j) {
            const double e = std::exp(xv.at(i, j) - m);
            out.at(i, j) = e;
            s += e;
        }
        for (int j = 0; j < xv.cols(); ++j) out.at(i, j) /= s;
    }
    n.value = std::move(out);
    return push(std::move(n));
}

NodeId Tape::layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
    check_id(x, nodes_.size(), "layer_norm");
    check_id(gamma, nodes_.size(), "layer_norm");
    check_id(beta, nodes_.size(), "layer_norm");
    const Matrix& xv = node(x).value;
    const Matrix& gv = node(gamma).value;
    const Matrix& bv = node(beta).value;
    const int d = xv.cols();
    if (d == 0) throw DimensionError("layer_norm: empty rows");
    if (gv.rows() != 1 || gv.cols() != d || bv.rows() != 1 || bv.cols() != d)
        throw DimensionError("layer_norm: gamma and beta must be 1 x cols(x)");
    Node n;
    n.op = Op::LayerNorm;
    n.nparents = 3;
    n.parents = {x, gamma, beta};
    n.xparam = eps;
    Matrix out(xv.rows(), d, precision_);
    Matrix xhat(xv.rows(), d, precision_);
    Matrix inv_std(xv.rows(), 1, precision_);
    for (int i = 0; i < xv.rows(); ++i) {
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += xv.at(i, j);
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = xv.at(i, j) - mean;
            var += c * c;
        }
        var /= d;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std.at(i, 0) = is;
        for (int j = 0; j < d; ++j) {
            const double h = (xv.at(i, j) - mean) * is;
            xhat.at(i, j) = h;
            out.at(i, j) = h * gv.at(0, j) + bv.at(0, j);
        }
    }
    xhat.apply_precision();
    inv_std.apply_precision();
    n.value = std::move(out);
    n.saved1 = std::move(xhat);
    n.saved2 = std::move(inv_std);
    return push(std::move(n));
}

NodeId Tape::row_max_pool(NodeId x) {
    check_id(x, nodes_.size(), "row_max_pool");
    const Matrix& xv = node(x).value;
    if (xv.rows() == 0) throw DimensionError("row_max_pool: empty input");
    Node n;
    n.op = Op::RowMaxPool;
    n.nparents = 1;
    n.parents = {x, kNoNode, kNoNode};
    Matrix out(1, xv.cols(), precision_);
    for (int j = 0; j < xv.cols(); ++j) {
        double m = xv.at(0, j);
        for (int i = 1; i < xv.rows(); ++i) m = std::max(m, xv.at(i, j));
        out.at(0, j) = m;
    }
    n.value = std::move(out);
    return push(std::move(n));
}

NodeId Tape::row_mean_pool(NodeId x) {
    check_id(x, nodes_.size(), "row_mean_pool");
    const Matrix& xv = node(x).value;
    if (xv.rows() == 0) throw DimensionError("row_mean_pool: empty input");
    Node n;
    n.op = Op::RowMeanPool;
    n.nparents = 1;
    n.parents = {x, kNoNode, kNoNode};
    Matrix out(1, xv.cols(), precision_);
    for (int j = 0; j < xv.cols(); ++j) {
        double s = 0.0;
        for (int i = 0; i < xv.rows(); ++i) s += xv.at(i, j);
        out.at(0, j) = s / xv.rows();
    }
    n.value = std::move(out);
    return push(std::move(n));
}

NodeId Tape::gather_rows(NodeId x, const std::vector<int>& indices) {
    check_id(x, nodes_.size(), "gather_rows");
    const Matrix& xv = node(x).value;
    for (int r : indices)
        if (r < 0 || r >= xv.rows()) throw IndexError("gather_rows: row index out of range");
    Node n;
    n.op = Op::GatherRows;
    n.nparents = 1;
    n.parents = {x, kNoNode, kNoNode};
    n.indices = indices;
    Matrix out(static_cast<int>(indices.size()), xv.cols(), precision_);
    for (std::size_t r = 0; r < indices.size(); ++r)
        for (int j = 0; j < xv.cols(); ++j) out.at(static_cast<int>(r), j) = xv.at(indices[r], j);
    n.value = std::move(out);
    return push(std::move(n));
}

NodeId Tape::segment_max_pool(NodeId x, int segment_len) {
    check_id(x, nodes_.size(), "segment_max_pool");
    const Matrix& xv = node(x).value;
    if (segment_len <= 0 || xv.rows() % segment_len != 0)
        throw DimensionError("segment_max_pool: rows must be a positive multiple of segment_len");
    Node n;
    n.op = Op::SegmentMaxPool;
    n.nparents = 1;
    n.parents = {x, kNoNode, kNoNode};
    n.i0 = segment_len;
    const int segs = xv.rows() / segment_len;
    Matrix out(segs, xv.cols(), precision_);
    for (int s = 0; s < segs; ++s)
        for (int j = 0; j < xv.cols(); ++j) {
            double m = xv.at(s * segment_len, j);
            for (int r = 1; r < segment_len; ++r)
                m = std::max(m, xv.at(s * segment_len + r, j));
            out.at(s, j) = m;
        }
    n.value = std::move(out);
    return push(std::move(n));
}

NodeId Tape::concat_cols(NodeId a, NodeId b) {
    check_id(a, nodes_.size(), "concat_cols");
    check_id(b, nodes_.size(), "concat_cols");
    const Matrix& av = node(a).value;
    const Matrix& bv = node(b).value;
    if (av.rows() != bv.rows()) throw DimensionError("concat_cols: row counts differ");
    Node n;
    n.op = Op::ConcatCols;
    n.nparents = 2;
    n.parents = {a, b, kNoNode};
    Matrix out(av.rows(), av.cols() + bv.cols(), precision_);
    for (int i = 0; i < av.rows(); ++i) {
        for (int j = 0; j < av.cols(); ++j) out.at(i, j) = av.at(i, j);
        for (int j = 0; j < bv.cols(); ++j) out.at(i, av.cols() + j) = bv.at(i, j);
    }
    n.value = std::move(out);
    return push(std::move(n));
}

NodeId Tape::slice_cols(NodeId x, int j0, int j1) {
    check_id(x, nodes_.size(), "slice_cols");
    const Matrix& xv = node(x).value;
    if (j0 < 0 || j1 > xv.cols() || j0 >= j1)
        throw IndexError("slice_cols: bad column range");
    Node n;
    n.op = Op::SliceCols;
    n.nparents = 1;
    n.parents = {x, kNoNode, kNoNode};
    n.i0 = j0;
    n.i1 = j1;
    Matrix out(xv.rows(), j1 - j0, precision_);
    for (int i = 0; i < xv.rows(); ++i)
        for (int j = j0; j < j1; ++j) out.at(i, j - j0) = xv.at(i, j);
    n.value = std::move(out);
    return push(std::move(n));
}

NodeId Tape::max_elem(NodeId a, NodeId b) {
    check_id(a, nodes_.size(), "max_elem");
    check_id(b, nodes_.size(), "max_elem");
    Node n;
    n.op = Op::MaxElem;
    n.nparents = 2;
    n.parents = {a, b, kNoNode};
    n.value = elementwise(node(a).value, node(b).value, precision_, "max_elem",
                          [](double x, double y) { return x >= y ? x : y; });
    return push(std::move(n));
}

NodeId Tape::sum(NodeId x) {
    check_id(x, nodes_.size(), "sum");
    const Matrix& xv = node(x).value;
    Node n;
    n.op = Op::Sum;
    n.nparents = 1;
    n.parents = {x, kNoNode, kNoNode};
    Matrix out(1, 1, precision_);
    double s = 0.0;
    for (int i = 0; i < xv.rows(); ++i)
        for (int j = 0; j < xv.cols(); ++j) s += xv.at(i, j);
    out.at(0, 0) = s;
    n.value = std::move(out);
    return push(std::move(n));
}

NodeId Tape::cross_entropy_logits(NodeId logits, int label) {
    check_id(logits, nodes_.size(), "cross_entropy_logits");
    const Matrix& xv = node(logits).value;
    if (xv.rows() != 1 || xv.cols() < 1)
        throw DimensionError("cross_entropy_logits: logits must be a non-empty row vector");
    if (label < 0 || label >= xv.cols())
        throw IndexError("cross_entropy_logits: label out of range");
    Node n;
    n.op = Op::CrossEntropyLogits;
    n.nparents = 1;
    n.parents = {logits, kNoNode, kNoNode};
    n.i0 = label;
    double m = xv.at(0, 0);
    for (int j = 1; j < xv.cols(); ++j) m = std::max(m, xv.at(0, j));
    Matrix p(1, xv.cols(), precision_);
    double s = 0.0;
    for (int j = 0; j < xv.cols(); ++j) {
        const double e = std::exp(xv.at(0, j) - m);
        p.at(0, j) = e;
        s += e;
    }
    for (int j = 0; j < xv.cols(); ++j) p.at(0, j) /= s;
    p.apply_precision();
    Matrix out(1, 1, precision_);
    out.at(0, 0) = std::log(s) - (xv.at(0, label) - m);
    n.value = std::move(out);
    n.saved1 = std::move(p);
    return push(std::move(n));
}

NodeId Tape::linear(NodeId x, NodeId w, NodeId bias) {
    check_id(x, nodes_.size(), "linear");
    check_id(w, nodes_.size(), "linear");
    if (!node(x).value.all_finite() || !node(w).value.all_finite())
        throw NumericError("linear: non-finite input");
    NodeId y = matmul(x, w);
    if (bias == kNoNode) return y;
    check_id(bias, nodes_.size(), "linear");
    if (!node(bias).value.all_finite()) throw NumericError("linear: non-finite bias");
    return add_bias(y, bias);
}

const Matrix& Tape::grad(NodeId id) const {
    check_id(id, nodes_.size(), "grad");
    const Node& n = node(id);
    if (n.grad.empty())
        throw ContractError("grad: node has no gradient (not visited by backward)");
    return n.grad;
}

void Tape::accumulate(NodeId id, const Matrix& contribution) {
    Node& n = node(id);
    if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols(), precision_);
    if (!n.grad.same_shape(contribution))
        throw DimensionError("backward: gradient shape mismatch");
    for (int i = 0; i < n.grad.rows(); ++i)
        for (int j = 0; j < n.grad.cols(); ++j) n.grad.at(i, j) += contribution.at(i, j);
    n.grad.apply_precision();
}

void Tape::backward(NodeId loss, bool elide) {
    check_id(loss, nodes_.size(), "backward");
    const Node& L = node(loss);
    if (L.value.rows() != 1 || L.value.cols() != 1)
        throw ContractError("backward: loss must be a 1x1 scalar");
    if (!L.requires_grad)
        throw ContractError("backward: loss does not depend on any tunable input");

    for (Node& n : nodes_) n.grad = Matrix();
    visits_.clear();
    backward_flops_ = 0;
    backward_by_scope_.clear();

    // Ancestor cone of the loss; with elision the walk refuses to enter
    // requires_grad false nodes, so frozen subgraphs are never marked.
    std::vector<char> marked(nodes_.size(), 0);
    std::vector<NodeId> stack{loss};
    marked[static_cast<std::size_t>(loss)] = 1;
    while (!stack.empty()) {
        const NodeId id = stack.back();
        stack.pop_back();
        const Node& n = node(id);
        for (int i = 0; i < n.nparents; ++i) {
            const NodeId p = n.parents[i];
            if (marked[static_cast<std::size_t>(p)]) continue;
            if (elide && !node(p).requires_grad) continue;
            marked[static_cast<std::size_t>(p)] = 1;
            stack.push_back(p);
        }
    }

    node(loss).grad = Matrix::full(1, 1, 1.0, precision_);
    for (NodeId id = loss; id >= 0; --id) {
        if (!marked[static_cast<std::size_t>(id)]) continue;
        visits_.push_back(id);
        backprop_node(id, marked);
    }
}

void Tape::backprop_node(NodeId id, const std::vector<char>& marked) {
    Node& n = node(id);
    // A marked node can still have an empty grad when no marked descendant
    // contributed to it (it cannot influence the loss numerically); skip.
    if (n.grad.empty()) return;
    const Matrix& dy = n.grad;
    const std::string& sc = scope_names_[n.scope];
    auto wants = [&](int slot) {
        return n.parents[slot] != kNoNode && marked[static_cast<std::size_t>(n.parents[slot])];
    };
    switch (n.op) {
        case Op::Input:
            break;
        case Op::MatMul: {
            const Matrix& a = node(n.parents[0]).value;
            const Matrix& b = node(n.parents[1]).value;
            if (wants(0)) {
                accumulate(n.parents[0], stag::matmul_nt(dy, b));
                backward_flops_ += n.fwd_flops;
                backward_by_scope_[sc] += n.fwd_flops;
            }
            if (wants(1)) {
                accumulate(n.parents[1], stag::matmul_tn(a, dy));
                backward_flops_ += n.fwd_flops;
                backward_by_scope_[sc] += n.fwd_flops;
            }
            break;
        }
        case Op::MatMulNT: {
            const Matrix& a = node(n.parents[0]).value;
            const Matrix& b = node(n.parents[1]).value;
            if (wants(0)) {
                accumulate(n.parents[0], stag::matmul(dy, b));
                backward_flops_ += n.fwd_flops;
                backward_by_scope_[sc] += n.fwd_flops;
            }
            if (wants(1)) {
                accumulate(n.parents[1], stag::matmul_tn(dy, a));
                backward_flops_ += n.fwd_flops;
                backward_by_scope_[sc] += n.fwd_flops;
            }
            break;
        }
        case Op::AddBias: {
            if (wants(0)) accumulate(n.parents[0], dy);
            if (wants(1)) {
                Matrix db(1, dy.cols(), precision_);
                for (int j = 0; j < dy.cols(); ++j) {
                    double s = 0.0;
                    for (int i = 0; i < dy.rows(); ++i) s += dy.at(i, j);
                    db.at(0, j) = s;
                }
                accumulate(n.parents[1], db);
            }
            break;
        }
        case Op::Add: {
            if (wants(0)) accumulate(n.parents[0], dy);
            if (wants(1)) accumulate(n.parents[1], dy);
            break;
        }
        case Op::Sub: {
            if (wants(0)) accumulate(n.parents[0], dy);
            if (wants(1)) {
                Matrix neg(dy.rows(), dy.cols(), precision_);
                for (int i = 0; i < dy.rows(); ++i)
                    for (int j = 0; j < dy.cols(); ++j) neg.at(i, j) = -dy.at(i, j);
                accumulate(n.parents[1], neg);
            }
            break;
        }
        case Op::Mul: {
            const Matrix& a = node(n.parents[0]).value;
            const Matrix& b = node(n.parents[1]).value;
            if (wants(0)) {
                Matrix da(dy.rows(), dy.cols(), precision_);
                for (int i = 0; i < dy.rows(); ++i)
                    for (int j = 0; j < dy.cols(); ++j) da.at(i, j) = dy.at(i, j) * b.at(i, j);
                accumulate(n.parents[0], da);
            }
            if (wants(1)) {
                Matrix db(dy.rows(), dy.cols(), precision_);
                for (int i = 0; i < dy.rows(); ++i)
                    for (int j = 0; j < dy.cols(); ++j) db.at(i, j) = dy.at(i, j) * a.at(i, j);
                accumulate(n.parents[1], db);
            }
            break;
        }
        case Op::Scale: {
            if (wants(0)) {
                Matrix dx(dy.rows(), dy.cols(), precision_);
                for (int i = 0; i < dy.rows(); ++i)
                    for (int j = 0; j < dy.cols(); ++j) dx.at(i, j) = n.xparam * dy.at(i, j);
                accumulate(n.parents[0], dx);
            }
            break;
        }
        case Op::LeakyRelu: {
            if (wants(0)) {
                const Matrix& x = node(n.parents[0]).value;
                Matrix dx(dy.rows(), dy.cols(), precision_);
                for (int i = 0; i < dy.rows(); ++i)
                    for (int j = 0; j < dy.cols(); ++j)
                        dx.at(i, j) = dy.at(i, j) * (x.at(i, j) > 0.0 ? 1.0 : n.xparam);
                accumulate(n.parents[0], dx);
            }
            break;
        }
        case Op::RowSoftmax: {
            if (wants(0)) {
                const Matrix& p = n.value;
                Matrix dx(dy.rows(), dy.cols(), precision_);
                for (int i = 0; i < dy.rows(); ++i) {
                    double dot = 0.0;
                    for (int j = 0; j < dy.cols(); ++j) dot += dy.at(i, j) * p.at(i, j);
                    for (int j = 0; j < dy.cols(); ++j)
                        dx.at(i, j) = p.at(i, j) * (dy.at(i, j) - dot);
                }
                accumulate(n.parents[0], dx);
            }
            break;
        }
        case Op::LayerNorm: {
            const Matrix& xhat = n.saved1;
            const Matrix& inv_std = n.saved2;
            const Matrix& g = node(n.parents[1]).value;
            const int d = dy.cols();
            if (wants(2)) {
                Matrix db(1, d, precision_);
                for (int j = 0; j < d; ++j) {
                    double s = 0.0;
                    for (int i = 0; i < dy.rows(); ++i) s += dy.at(i, j);
                    db.at(0, j) = s;
                }
                accumulate(n.parents[2], db);
            }
            if (wants(1)) {
                Matrix dg(1, d, precision_);
                for (int j = 0; j < d; ++j) {
                    double s = 0.0;
                    for (int i = 0; i < dy.rows(); ++i) s += dy.at(i, j) * xhat.at(i, j);
                    dg.at(0, j) = s;
                }
                accumulate(n.parents[1], dg);
            }
            if (wants(0)) {
                Matrix dx(dy.rows(), d, precision_);
                for (int i = 0; i < dy.rows(); ++i) {
                    double m1 = 0.0, m2 = 0.0;
                    for (int j = 0; j < d; ++j) {
                        const double gj = dy.at(i, j) * g.at(0, j);
                        m1 += gj;
                        m2 += gj * xhat.at(i, j);
                    }
                    m1 /= d;
                    m2 /= d;
                    for (int j = 0; j < d; ++j) {
                        const double gj = dy.at(i, j) * g.at(0, j);
                        dx.at(i, j) = inv_std.at(i, 0) * (gj - m1 - xhat.at(i, j) * m2);
                    }
                }
                accumulate(n.parents[0], dx);
            }
            break;
        }
        case Op::RowMaxPool: {
            if (wants(0)) {
                const Matrix& x = node(n.parents[0]).value;
                Matrix dx(x.rows(), x.cols(), precision_);
                for (int j = 0; j < x.cols(); ++j) {
                    int arg = 0;
                    for (int i = 1; i < x.rows(); ++i)
                        if (x.at(i, j) > x.at(arg, j)) arg = i;
                    dx.at(arg, j) = dy.at(0, j);
                }
                accumulate(n.parents[0], dx);
            }
            break;
        }
        case Op::RowMeanPool: {
            if (wants(0)) {
                const Matrix& x = node(n.parents[0]).value;
                Matrix dx(x.rows(), x.cols(), precision_);
                for (int i = 0; i < x.rows(); ++i)
                    for (int j = 0; j < x.cols(); ++j) dx.at(i, j) = dy.at(0, j) / x.rows();
                accumulate(n.parents[0], dx);
            }
            break;
        }
        case Op::GatherRows: {
            if (wants(0)) {
                const Matrix& x = node(n.parents[0]).value;
                Matrix dx(x.rows(), x.cols(), precision_);
                for (std::size_t r = 0; r < n.indices.size(); ++r)
                    for (int j = 0; j < x.cols(); ++j)
                        dx.at(n.indices[r], j) += dy.at(static_cast<int>(r), j);
                accumulate(n.parents[0], dx);
            }
            break;
        }
        case Op::SegmentMaxPool: {
            if (wants(0)) {
                const Matrix& x = node(n.parents[0]).value;
                const int g = n.i0;
                Matrix dx(x.rows(), x.cols(), precision_);
                for (int s = 0; s < dy.rows(); ++s)
                    for (int j = 0; j < x.cols(); ++j) {
                        int arg = s * g;
                        for (int r = 1; r < g; ++r)
                            if (x.at(s * g + r, j) > x.at(arg, j)) arg = s * g + r;
                        dx.at(arg, j) = dy.at(s, j);
                    }
                accumulate(n.parents[0], dx);
            }
            break;
        }
        case Op::ConcatCols: {
            const int p = node(n.parents[0]).value.cols();
            if (wants(0)) {
                Matrix da(dy.rows(), p, precision_);
                for (int i = 0; i < dy.rows(); ++i)
                    for (int j = 0; j < p; ++j) da.at(i, j) = dy.at(i, j);
                accumulate(n.parents[0], da);
            }
            if (wants(1)) {
                const int q = dy.cols() - p;
                Matrix db(dy.rows(), q, precision_);
                for (int i = 0; i < dy.rows(); ++i)
                    for (int j = 0; j < q; ++j) db.at(i, j) = dy.at(i, p + j);
                accumulate(n.parents[1], db);
            }
            break;
        }
        case Op::SliceCols: {
            if (wants(0)) {
                const Matrix& x = node(n.parents[0]).value;
                Matrix dx(x.rows(), x.cols(), precision_);
                for (int i = 0; i < dy.rows(); ++i)
                    for (int j = 0; j < dy.cols(); ++j) dx.at(i, n.i0 + j) = dy.at(i, j);
                accumulate(n.parents[0], dx);
            }
            break;
        }
        case Op::MaxElem: {
            const Matrix& a = node(n.parents[0]).value;
            const Matrix& b = node(n.parents[1]).value;
            if (wants(0)) {
                Matrix da(dy.rows(), dy.cols(), precision_);
                for (int i = 0; i < dy.rows(); ++i)
                    for (int j = 0; j < dy.cols(); ++j)
                        da.at(i, j) = a.at(i, j) >= b.at(i, j) ? dy.at(i, j) : 0.0;
                accumulate(n.parents[0], da);
            }
            if (wants(1)) {
                Matrix db(dy.rows(), dy.cols(), precision_);
                for (int i = 0; i < dy.rows(); ++i)
                    for (int j = 0; j < dy.cols(); ++j)
                        db.at(i, j) = a.at(i, j) >= b.at(i, j) ? 0.0 : dy.at(i, j);
                accumulate(n.parents[1], db);
            }
            break;
        }
        case Op::Sum: {
            if (wants(0)) {
                const Matrix& x = node(n.parents[0]).value;
                accumulate(n.parents[0], Matrix::full(x.rows(), x.cols(), dy.at(0, 0), precision_));
            }
            break;
        }
        case Op::CrossEntropyLogits: {
            if (wants(0)) {
                const Matrix& p = n.saved1;
                Matrix dx(1, p.cols(), precision_);
                for (int j = 0; j < p.cols(); ++j)
                    dx.at(0, j) = (p.at(0, j) - (j == n.i0 ? 1.0 : 0.0)) * dy.at(0, 0);
                accumulate(n.parents[0], dx);
            }
            break;
        }
    }
}

std::int64_t Tape::forward_flops() const {
    std::int64_t total = 0;
    for (const Node& n : nodes_) total += n.fwd_flops;
    return total;
}

std::map<std::string, std::int64_t> Tape::forward_flops_by_scope() const {
    std::map<std::string, std::int64_t> out;
    for (const Node& n : nodes_)
        if (n.fwd_flops > 0) out[scope_names_[n.scope]] += n.fwd_flops;
    return out;
}

std::int64_t Tape::visited_value_elements() const {
    std::int64_t total = 0;
    for (NodeId id : visits_) total += static_cast<std::int64_t>(node(id).value.size());
    return total;
}

Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& theta,
                        double eps) {
    if (eps <= 0.0) throw ContractError("finite_diff_grad: eps must be positive");
    const double f0 = f(theta);
    const double f1 = f(theta);
    if (f0 != f1) throw OracleError("finite_diff_grad: function is not deterministic");
    Matrix g(theta.rows(), theta.cols());
    for (int i = 0; i < theta.rows(); ++i)
        for (int j = 0; j < theta.cols(); ++j) {
            Matrix tp = theta;
            Matrix tm = theta;
            tp.at(i, j) += eps;
            tm.at(i, j) -= eps;
            g.at(i, j) = (f(tp) - f(tm)) / (2.0 * eps);
        }
    return g;
}

}  // namespace stag
