#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "wdmatch/errors.hpp"
#include "wdmatch/tensor.hpp"

namespace wdmatch {

using NodeId = int;

enum class OpKind {
    Constant,
    Input,
    Parameter,
    MatMul,
    Add,
    Sub,
    Mul,
    Scale,
    Maximum,
    Relu,
    Tanh,
    Sigmoid,
    Exp,
    Log,
    Abs,
    Concat,
    ReduceSum,
    ReduceMean,
    SoftmaxXent,
    SigmoidBce,
};

inline const char* op_name(OpKind op) {
    switch (op) {
        case OpKind::Constant: return "constant";
        case OpKind::Input: return "input";
        case OpKind::Parameter: return "parameter";
        case OpKind::MatMul: return "matmul";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::Scale: return "scale";
        case OpKind::Maximum: return "maximum";
        case OpKind::Relu: return "relu";
        case OpKind::Tanh: return "tanh";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Exp: return "exp";
        case OpKind::Log: return "log";
        case OpKind::Abs: return "abs";
        case OpKind::Concat: return "concat";
        case OpKind::ReduceSum: return "reduce_sum";
        case OpKind::ReduceMean: return "reduce_mean";
        case OpKind::SoftmaxXent: return "softmax_xent";
        case OpKind::SigmoidBce: return "sigmoid_bce";
    }
    return "?";
}

inline double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Reverse-mode computation tape. Nodes are appended in topological order by
// construction, so the forward pass is a single left-to-right sweep and the
// backward pass the reverse sweep. All reductions accumulate left to right,
// which makes repeated evaluations bit-identical.
class Graph {
public:
    struct Node {
        OpKind op = OpKind::Constant;
        std::vector<NodeId> inputs;
        std::vector<std::size_t> shape;
        Tensor value;
        Tensor grad;
        std::string name;
        double scale = 0.0;                // Scale
        std::vector<int> class_labels;     // SoftmaxXent
        std::vector<double> binary_labels; // SigmoidBce
        bool needs_grad = false;
        bool bound = false; // Input nodes start unbound
    };

    NodeId constant(Tensor v, std::string name = "") {
        Node n;
        n.op = OpKind::Constant;
        n.shape = v.shape();
        n.value = std::move(v);
        n.name = std::move(name);
        n.bound = true;
        return push(std::move(n));
    }

    NodeId input(std::string name, std::vector<std::size_t> shape) {
        if (inputs_.count(name)) throw StateError("input '" + name + "' declared twice");
        Node n;
        n.op = OpKind::Input;
        n.shape = std::move(shape);
        n.name = name;
        n.bound = false;
        NodeId id = push(std::move(n));
        inputs_[std::move(name)] = id;
        return id;
    }

    // Named trainable leaf. Re-registering the same name returns the existing
    // node, which is how parameter sharing across the X and Y paths works.
    NodeId parameter(const std::string& name, const Tensor& v) {
        auto it = params_.find(name);
        if (it != params_.end()) {
            if (node(it->second).shape != v.shape()) {
                throw ShapeError("parameter '" + name + "' re-registered with shape " +
                                 v.shape_string() + ", expected " +
                                 Tensor::shape_string(node(it->second).shape));
            }
            return it->second;
        }
        Node n;
        n.op = OpKind::Parameter;
        n.shape = v.shape();
        n.value = v;
        n.name = name;
        n.needs_grad = true;
        n.bound = true;
        NodeId id = push(std::move(n));
        params_[name] = id;
        return id;
    }

    NodeId matmul(NodeId a, NodeId b) {
        require_rank(a, 2);
        require_rank(b, 2);
        const auto& sa = node(a).shape;
        const auto& sb = node(b).shape;
        if (sa[1] != sb[0]) {
            throw ShapeError("matmul: inner extents differ between " + describe(a) + " " +
                             Tensor::shape_string(sa) + " and " + describe(b) + " " +
                             Tensor::shape_string(sb));
        }
        return push(make(OpKind::MatMul, {a, b}, {sa[0], sb[1]}));
    }

    // Elementwise add; also accepts a [1,n] or [n] bias on the right against
    // an [m,n] left operand, broadcast over rows.
    NodeId add(NodeId a, NodeId b) {
        const auto& sa = node(a).shape;
        const auto& sb = node(b).shape;
        if (sa != sb && !bias_broadcast(sa, sb)) {
            throw ShapeError("add: shape mismatch between " + describe(a) + " " +
                             Tensor::shape_string(sa) + " and " + describe(b) + " " +
                             Tensor::shape_string(sb));
        }
        return push(make(OpKind::Add, {a, b}, sa));
    }

    NodeId sub(NodeId a, NodeId b) { return binary_same(OpKind::Sub, a, b); }
    NodeId mul(NodeId a, NodeId b) { return binary_same(OpKind::Mul, a, b); }

    // Elementwise max. At ties the gradient is routed to the second operand,
    // so maximum(x, 0) has zero slope at x == 0.
    NodeId maximum(NodeId a, NodeId b) { return binary_same(OpKind::Maximum, a, b); }

    NodeId scale(NodeId a, double s) {
        Node n = make(OpKind::Scale, {a}, node(a).shape);
        n.scale = s;
        return push(std::move(n));
    }

    NodeId relu(NodeId a) { return unary(OpKind::Relu, a); }
    NodeId tanh(NodeId a) { return unary(OpKind::Tanh, a); }
    NodeId sigmoid(NodeId a) { return unary(OpKind::Sigmoid, a); }
    NodeId exp(NodeId a) { return unary(OpKind::Exp, a); }
    NodeId log(NodeId a) { return unary(OpKind::Log, a); }
    NodeId abs(NodeId a) { return unary(OpKind::Abs, a); }

    // Concatenate rank-1 nodes end to end, or rank-2 nodes along columns.
    NodeId concat(const std::vector<NodeId>& parts) {
        if (parts.empty()) throw ShapeError("concat: no inputs");
        const std::size_t rank = node(parts[0]).shape.size();
        std::size_t total = 0;
        for (NodeId p : parts) {
            const auto& s = node(p).shape;
            if (s.size() != rank) {
                throw ShapeError("concat: rank mismatch at " + describe(p));
            }
            if (rank == 1) {
                total += s[0];
            } else if (rank == 2) {
                if (s[0] != node(parts[0]).shape[0]) {
                    throw ShapeError("concat: row count mismatch between " + describe(parts[0]) +
                                     " and " + describe(p));
                }
                total += s[1];
            } else {
                throw ShapeError("concat: rank > 2 unsupported at " + describe(p));
            }
        }
        std::vector<std::size_t> shape =
            rank == 1 ? std::vector<std::size_t>{total}
                      : std::vector<std::size_t>{node(parts[0]).shape[0], total};
        return push(make(OpKind::Concat, parts, std::move(shape)));
    }

    NodeId reduce_sum(NodeId a) { return push(make(OpKind::ReduceSum, {a}, {1})); }
    NodeId reduce_mean(NodeId a) { return push(make(OpKind::ReduceMean, {a}, {1})); }

    // Per-row softmax cross-entropy: logits [m,C], one class index per row.
    // Output is the [m] vector of per-example losses.
    NodeId softmax_xent(NodeId logits, std::vector<int> labels) {
        require_rank(logits, 2);
        const auto& s = node(logits).shape;
        if (labels.size() != s[0]) {
            throw ShapeError("softmax_xent: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(s[0]) + " rows at " + describe(logits));
        }
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= s[1]) {
                throw DataError("softmax_xent: label " + std::to_string(labels[i]) + " at row " +
                                std::to_string(i) + " out of range [0," + std::to_string(s[1]) + ")");
            }
        }
        Node n = make(OpKind::SoftmaxXent, {logits}, {s[0]});
        n.class_labels = std::move(labels);
        return push(std::move(n));
    }

    // Per-row sigmoid binary cross-entropy: logits [m] or [m,1], binary
    // labels. Output is the [m] vector of per-example losses.
    NodeId sigmoid_bce(NodeId logits, std::vector<double> labels) {
        const auto& s = node(logits).shape;
        const bool ok = s.size() == 1 || (s.size() == 2 && s[1] == 1);
        if (!ok) {
            throw ShapeError("sigmoid_bce: expected [m] or [m,1] logits at " + describe(logits));
        }
        if (labels.size() != s[0]) {
            throw ShapeError("sigmoid_bce: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(s[0]) + " rows at " + describe(logits));
        }
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] != 0.0 && labels[i] != 1.0) {
                throw DataError("sigmoid_bce: label at row " + std::to_string(i) +
                                " is not 0 or 1");
            }
        }
        Node n = make(OpKind::SigmoidBce, {logits}, {s[0]});
        n.binary_labels = std::move(labels);
        return push(std::move(n));
    }

    void set_loss(NodeId id) {
        if (node(id).shape != std::vector<std::size_t>{1}) {
            throw ShapeError("loss node " + describe(id) + " must have shape [1], got " +
                             Tensor::shape_string(node(id).shape));
        }
        loss_ = id;
    }

    NodeId loss_node() const { return loss_; }

    void bind(const std::string& name, Tensor v) {
        auto it = inputs_.find(name);
        if (it == inputs_.end()) throw StateError("bind: no input named '" + name + "'");
        Node& n = node(it->second);
        if (v.shape() != n.shape) {
            throw ShapeError("bind '" + name + "': shape " + v.shape_string() + ", expected " +
                             Tensor::shape_string(n.shape));
        }
        n.value = std::move(v);
        n.bound = true;
    }

    // Forward sweep. Deterministic: identical bindings give bit-identical
    // values. Returns the loss value when a loss node is set.
    double forward() {
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            compute(static_cast<NodeId>(i));
        }
        evaluated_ = true;
        return loss_ >= 0 ? node(loss_).value[0] : 0.0;
    }

    // Reverse sweep from the scalar loss. Returns one gradient per named
    // parameter, shaped like the parameter.
    std::map<std::string, Tensor> backward() {
        if (!evaluated_) throw StateError("gradients requested before evaluation");
        if (loss_ < 0) throw StateError("gradients requested without a loss node");
        for (Node& n : nodes_) {
            if (n.needs_grad) {
                n.grad = Tensor(n.shape);
            } else {
                n.grad = Tensor();
            }
        }
        if (!node(loss_).needs_grad) {
            // Loss does not depend on any parameter; all gradients are zero.
            std::map<std::string, Tensor> out;
            for (const auto& [name, id] : params_) out[name] = Tensor(node(id).shape);
            return out;
        }
        node(loss_).grad[0] = 1.0;
        for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
            if (node(id).needs_grad && !node(id).grad.empty()) propagate(id);
        }
        std::map<std::string, Tensor> out;
        for (const auto& [name, id] : params_) {
            out[name] = node(id).grad.empty() ? Tensor(node(id).shape) : node(id).grad;
        }
        return out;
    }

    const Tensor& value(NodeId id) const {
        if (!evaluated_) throw StateError("value requested before evaluation");
        return node(id).value;
    }

    double loss_value() const {
        if (!evaluated_) throw StateError("loss requested before evaluation");
        if (loss_ < 0) throw StateError("no loss node set");
        return node(loss_).value[0];
    }

    bool evaluated() const { return evaluated_; }
    std::size_t node_count() const { return nodes_.size(); }
    const std::map<std::string, NodeId>& parameters() const { return params_; }

    Node& node(NodeId id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }

    std::string describe(NodeId id) const {
        const Node& n = node(id);
        std::string d = "#" + std::to_string(id) + "(" + op_name(n.op);
        if (!n.name.empty()) d += " '" + n.name + "'";
        return d + ")";
    }

private:
    Node make(OpKind op, std::vector<NodeId> in, std::vector<std::size_t> shape) {
        Node n;
        n.op = op;
        n.inputs = std::move(in);
        n.shape = std::move(shape);
        n.bound = true;
        for (NodeId i : n.inputs) {
            if (node(i).needs_grad) n.needs_grad = true;
        }
        return n;
    }

    NodeId push(Node n) {
        nodes_.push_back(std::move(n));
        evaluated_ = false;
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    NodeId unary(OpKind op, NodeId a) { return push(make(op, {a}, node(a).shape)); }

    NodeId binary_same(OpKind op, NodeId a, NodeId b) {
        const auto& sa = node(a).shape;
        const auto& sb = node(b).shape;
        if (sa != sb) {
            throw ShapeError(std::string(op_name(op)) + ": shape mismatch between " + describe(a) +
                             " " + Tensor::shape_string(sa) + " and " + describe(b) + " " +
                             Tensor::shape_string(sb));
        }
        return push(make(op, {a, b}, sa));
    }

    void require_rank(NodeId id, std::size_t r) const {
        if (node(id).shape.size() != r) {
            throw ShapeError(describe(id) + ": expected rank " + std::to_string(r) + ", got " +
                             Tensor::shape_string(node(id).shape));
        }
    }

    static bool bias_broadcast(const std::vector<std::size_t>& a,
                               const std::vector<std::size_t>& b) {
        if (a.size() != 2) return false;
        if (b.size() == 1) return b[0] == a[1];
        return b.size() == 2 && b[0] == 1 && b[1] == a[1];
    }

    void compute(NodeId id) {
        Node& n = node(id);
        switch (n.op) {
            case OpKind::Constant:
            case OpKind::Parameter:
                return;
            case OpKind::Input:
                if (!n.bound) throw StateError("input '" + n.name + "' evaluated before binding");
                return;
            default:
                break;
        }
        const Tensor& a = node(n.inputs[0]).value;
        Tensor out(n.shape);
        switch (n.op) {
            case OpKind::MatMul: {
                const Tensor& b = node(n.inputs[1]).value;
                const std::size_t m = a.rows(), k = a.cols(), c = b.cols();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < c; ++j) {
                        double acc = 0.0;
                        for (std::size_t t = 0; t < k; ++t) acc += a.at(i, t) * b.at(t, j);
                        out.at(i, j) = acc;
                    }
                }
                break;
            }
            case OpKind::Add: {
                const Tensor& b = node(n.inputs[1]).value;
                if (a.same_shape(b)) {
                    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
                } else {
                    const std::size_t m = a.rows(), c = a.cols();
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < c; ++j) out.at(i, j) = a.at(i, j) + b[j];
                }
                break;
            }
            case OpKind::Sub: {
                const Tensor& b = node(n.inputs[1]).value;
                for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
                break;
            }
            case OpKind::Mul: {
                const Tensor& b = node(n.inputs[1]).value;
                for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
                break;
            }
            case OpKind::Maximum: {
                const Tensor& b = node(n.inputs[1]).value;
                for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::max(a[i], b[i]);
                break;
            }
            case OpKind::Scale:
                for (std::size_t i = 0; i < a.size(); ++i) out[i] = n.scale * a[i];
                break;
            case OpKind::Relu:
                for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
                break;
            case OpKind::Tanh:
                for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::tanh(a[i]);
                break;
            case OpKind::Sigmoid:
                for (std::size_t i = 0; i < a.size(); ++i) out[i] = stable_sigmoid(a[i]);
                break;
            case OpKind::Exp:
                for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::exp(a[i]);
                break;
            case OpKind::Log:
                for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::log(a[i]);
                break;
            case OpKind::Abs:
                for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::fabs(a[i]);
                break;
            case OpKind::Concat: {
                if (node(n.inputs[0]).value.rank() == 1) {
                    std::size_t off = 0;
                    for (NodeId p : n.inputs) {
                        const Tensor& v = node(p).value;
                        for (std::size_t i = 0; i < v.size(); ++i) out[off + i] = v[i];
                        off += v.size();
                    }
                } else {
                    const std::size_t m = n.shape[0];
                    for (std::size_t i = 0; i < m; ++i) {
                        std::size_t off = 0;
                        for (NodeId p : n.inputs) {
                            const Tensor& v = node(p).value;
                            for (std::size_t j = 0; j < v.cols(); ++j)
                                out.at(i, off + j) = v.at(i, j);
                            off += v.cols();
                        }
                    }
                }
                break;
            }
            case OpKind::ReduceSum: {
                double acc = 0.0;
                for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
                out[0] = acc;
                break;
            }
            case OpKind::ReduceMean: {
                double acc = 0.0;
                for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
                out[0] = acc / static_cast<double>(a.size());
                break;
            }
            case OpKind::SoftmaxXent: {
                const std::size_t m = a.rows(), c = a.cols();
                for (std::size_t i = 0; i < m; ++i) {
                    double mx = a.at(i, 0);
                    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, a.at(i, j));
                    double sum = 0.0;
                    for (std::size_t j = 0; j < c; ++j) sum += std::exp(a.at(i, j) - mx);
                    const double lse = mx + std::log(sum);
                    out[i] = lse - a.at(i, static_cast<std::size_t>(n.class_labels[i]));
                }
                break;
            }
            case OpKind::SigmoidBce: {
                for (std::size_t i = 0; i < n.shape[0]; ++i) {
                    const double x = a[i];
                    const double y = n.binary_labels[i];
                    out[i] = std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::fabs(x)));
                }
                break;
            }
            default:
                throw StateError("compute: unhandled op");
        }
        if (!out.all_finite()) {
            throw NumericError("overflow: non-finite value at node " + describe(id));
        }
        n.value = std::move(out);
    }

    void add_grad(NodeId id, std::size_t i, double v) {
        Node& n = node(id);
        if (!n.needs_grad) return;
        n.grad[i] += v;
    }

    void propagate(NodeId id) {
        Node& n = node(id);
        const Tensor& g = n.grad;
        switch (n.op) {
            case OpKind::Constant:
            case OpKind::Input:
            case OpKind::Parameter:
                return;
            case OpKind::MatMul: {
                const NodeId ia = n.inputs[0], ib = n.inputs[1];
                const Tensor& a = node(ia).value;
                const Tensor& b = node(ib).value;
                const std::size_t m = a.rows(), k = a.cols(), c = b.cols();
                if (node(ia).needs_grad) {
                    Tensor& da = node(ia).grad;
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t t = 0; t < k; ++t) {
                            double acc = 0.0;
                            for (std::size_t j = 0; j < c; ++j) acc += g.at(i, j) * b.at(t, j);
                            da.at(i, t) += acc;
                        }
                }
                if (node(ib).needs_grad) {
                    Tensor& db = node(ib).grad;
                    for (std::size_t t = 0; t < k; ++t)
                        for (std::size_t j = 0; j < c; ++j) {
                            double acc = 0.0;
                            for (std::size_t i = 0; i < m; ++i) acc += a.at(i, t) * g.at(i, j);
                            db.at(t, j) += acc;
                        }
                }
                return;
            }
            case OpKind::Add: {
                const NodeId ia = n.inputs[0], ib = n.inputs[1];
                const Tensor& a = node(ia).value;
                const Tensor& b = node(ib).value;
                if (node(ia).needs_grad) {
                    for (std::size_t i = 0; i < g.size(); ++i) add_grad(ia, i, g[i]);
                }
                if (node(ib).needs_grad) {
                    if (a.same_shape(b)) {
                        for (std::size_t i = 0; i < g.size(); ++i) add_grad(ib, i, g[i]);
                    } else {
                        const std::size_t m = a.rows(), c = a.cols();
                        for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < c; ++j) add_grad(ib, j, g.at(i, j));
                    }
                }
                return;
            }
            case OpKind::Sub: {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    add_grad(n.inputs[0], i, g[i]);
                    add_grad(n.inputs[1], i, -g[i]);
                }
                return;
            }
            case OpKind::Mul: {
                const Tensor& a = node(n.inputs[0]).value;
                const Tensor& b = node(n.inputs[1]).value;
                for (std::size_t i = 0; i < g.size(); ++i) {
                    add_grad(n.inputs[0], i, g[i] * b[i]);
                    add_grad(n.inputs[1], i, g[i] * a[i]);
                }
                return;
            }
            case OpKind::Maximum: {
                const Tensor& a = node(n.inputs[0]).value;
                const Tensor& b = node(n.inputs[1]).value;
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (a[i] > b[i]) {
                        add_grad(n.inputs[0], i, g[i]);
                    } else {
                        add_grad(n.inputs[1], i, g[i]);
                    }
                }
                return;
            }
            case OpKind::Scale: {
                for (std::size_t i = 0; i < g.size(); ++i) add_grad(n.inputs[0], i, n.scale * g[i]);
                return;
            }
            case OpKind::Relu: {
                const Tensor& a = node(n.inputs[0]).value;
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (a[i] > 0.0) add_grad(n.inputs[0], i, g[i]);
                }
                return;
            }
            case OpKind::Tanh: {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double t = n.value[i];
                    add_grad(n.inputs[0], i, g[i] * (1.0 - t * t));
                }
                return;
            }
            case OpKind::Sigmoid: {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double s = n.value[i];
                    add_grad(n.inputs[0], i, g[i] * s * (1.0 - s));
                }
                return;
            }
            case OpKind::Exp: {
                for (std::size_t i = 0; i < g.size(); ++i)
                    add_grad(n.inputs[0], i, g[i] * n.value[i]);
                return;
            }
            case OpKind::Log: {
                const Tensor& a = node(n.inputs[0]).value;
                for (std::size_t i = 0; i < g.size(); ++i) add_grad(n.inputs[0], i, g[i] / a[i]);
                return;
            }
            case OpKind::Abs: {
                const Tensor& a = node(n.inputs[0]).value;
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (a[i] > 0.0) {
                        add_grad(n.inputs[0], i, g[i]);
                    } else if (a[i] < 0.0) {
                        add_grad(n.inputs[0], i, -g[i]);
                    }
                }
                return;
            }
            case OpKind::Concat: {
                if (node(n.inputs[0]).value.rank() == 1) {
                    std::size_t off = 0;
                    for (NodeId p : n.inputs) {
                        const std::size_t len = node(p).value.size();
                        for (std::size_t i = 0; i < len; ++i) add_grad(p, i, g[off + i]);
                        off += len;
                    }
                } else {
                    const std::size_t m = n.shape[0];
                    std::size_t off = 0;
                    for (NodeId p : n.inputs) {
                        const std::size_t c = node(p).value.cols();
                        if (node(p).needs_grad) {
                            Tensor& dp = node(p).grad;
                            for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < c; ++j) dp.at(i, j) += g.at(i, off + j);
                        }
                        off += c;
                    }
                }
                return;
            }
            case OpKind::ReduceSum: {
                const std::size_t len = node(n.inputs[0]).value.size();
                for (std::size_t i = 0; i < len; ++i) add_grad(n.inputs[0], i, g[0]);
                return;
            }
            case OpKind::ReduceMean: {
                const std::size_t len = node(n.inputs[0]).value.size();
                const double gi = g[0] / static_cast<double>(len);
                for (std::size_t i = 0; i < len; ++i) add_grad(n.inputs[0], i, gi);
                return;
            }
            case OpKind::SoftmaxXent: {
                const NodeId il = n.inputs[0];
                if (!node(il).needs_grad) return;
                const Tensor& a = node(il).value;
                const std::size_t m = a.rows(), c = a.cols();
                Tensor& dl = node(il).grad;
                for (std::size_t i = 0; i < m; ++i) {
                    double mx = a.at(i, 0);
                    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, a.at(i, j));
                    double sum = 0.0;
                    for (std::size_t j = 0; j < c; ++j) sum += std::exp(a.at(i, j) - mx);
                    for (std::size_t j = 0; j < c; ++j) {
                        const double p = std::exp(a.at(i, j) - mx) / sum;
                        const double y = j == static_cast<std::size_t>(n.class_labels[i]) ? 1.0 : 0.0;
                        dl.at(i, j) += g[i] * (p - y);
                    }
                }
                return;
            }
            case OpKind::SigmoidBce: {
                const NodeId il = n.inputs[0];
                if (!node(il).needs_grad) return;
                const Tensor& a = node(il).value;
                Tensor& dl = node(il).grad;
                for (std::size_t i = 0; i < n.shape[0]; ++i) {
                    dl[i] += g[i] * (stable_sigmoid(a[i]) - n.binary_labels[i]);
                }
                return;
            }
        }
    }

    std::vector<Node> nodes_;
    std::map<std::string, NodeId> params_;
    std::unordered_map<std::string, NodeId> inputs_;
    NodeId loss_ = -1;
    bool evaluated_ = false;
};

// Central-difference verification of the reverse-mode gradients: perturbs
// every parameter component by +/-h and compares. Returns the maximum
// relative error, with relative defined against max(1, |a|, |b|).
inline double check_gradients(Graph& g, double h = 1e-5) {
    if (h <= 0.0) throw ConfigError("check_gradients: h must be positive");
    g.forward();
    const auto grads = g.backward();
    double worst = 0.0;
    for (const auto& [name, id] : g.parameters()) {
        Tensor& p = g.node(id).value;
        const Tensor& bp = grads.at(name);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double saved = p[i];
            p[i] = saved + h;
            const double up = g.forward();
            p[i] = saved - h;
            const double dn = g.forward();
            p[i] = saved;
            const double fd = (up - dn) / (2.0 * h);
            const double rel =
                std::fabs(bp[i] - fd) / std::max({1.0, std::fabs(bp[i]), std::fabs(fd)});
            worst = std::max(worst, rel);
        }
    }
    g.forward();
    return worst;
}

} // namespace wdmatch
