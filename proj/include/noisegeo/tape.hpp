#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "noisegeo/tensor.hpp"

namespace noisegeo {

class Tape;

/// Handle to a node on a Tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    [[nodiscard]] const Tensor& value() const;
    [[nodiscard]] const Shape& shape() const { return value().shape(); }
};

struct BackwardArgs {
    std::span<const Tensor* const> inputs;
    const Tensor& output;
    const Tensor& grad;
    /// needs[i] is false when no requested gradient flows through input i;
    /// the backward rule may then return a null tensor in that slot.
    std::span<const char> needs;
};

using ForwardFn = std::function<Tensor(std::span<const Tensor* const>)>;
using BackwardFn = std::function<std::vector<Tensor>(const BackwardArgs&)>;

/// Append-only reverse-mode differentiation record.
///
/// Nodes are stored in creation order, so every parent index is smaller than
/// its child's. Each non-leaf node keeps the forward rule that produced it,
/// which lets `replay` recompute the whole graph from the leaves.
class Tape {
public:
    Var leaf(Tensor value);
    Var apply(std::string op, std::vector<Var> parents, ForwardFn forward, BackwardFn backward);

    [[nodiscard]] const Tensor& value(Var v) const { return nodes_[v.id].value; }
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
    [[nodiscard]] const std::string& op(std::size_t id) const { return nodes_[id].op; }
    [[nodiscard]] const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_[id].parents; }

    /// Gradients of a single-element `output` with respect to each of `inputs`.
    /// Inputs the output does not depend on receive an all-zero gradient.
    [[nodiscard]] std::vector<Tensor> grad(Var output, std::span<const Var> inputs) const;

    /// Recomputes every node from the leaf values and returns the new values.
    [[nodiscard]] std::vector<Tensor> replay() const;

private:
    struct Node {
        std::string op;
        std::vector<std::size_t> parents;
        Tensor value;
        ForwardFn forward;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
};

/// Differentiable operations. Batched operations treat axis 0 as the batch.
namespace ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_constant(Var a, double c);
/// a * s, where s holds a single value.
Var mul_scalar(Var a, Var s);
/// x (B,in) -> x W^T + b, with W (out,in) and b (out).
Var dense(Var x, Var weight, Var bias);
Var matmul(Var a, Var b);
Var leaky_relu(Var x, double slope = 0.2);
Var reshape(Var x, Shape shape);
/// 3x3, stride 1, zero padding 1. x (B,C,H,W), weight (O,C,3,3), bias (O).
Var conv2d(Var x, Var weight, Var bias);
/// Nearest-neighbour 2x upsampling of (B,C,H,W).
Var upsample2x(Var x);
Var sum(Var x);
Var mean(Var x);
Var square(Var x);
Var softplus(Var x);
Var sigmoid(Var x);
/// Per-row sum over all non-leading axes: (B, ...) -> (B).
Var row_sum(Var x);

}  // namespace ad

}  // namespace noisegeo
