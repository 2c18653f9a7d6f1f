#include "noisegeo/tape.hpp"

#include <cmath>

#include "noisegeo/nn_kernels.hpp"

namespace noisegeo {

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::leaf(Tensor value) {
    if (value.is_null()) throw Error("tape: leaf value must not be null");
    nodes_.push_back(Node{"leaf", {}, std::move(value), {}, {}});
    return Var{this, nodes_.size() - 1};
}

Var Tape::apply(std::string op, std::vector<Var> parents, ForwardFn forward, BackwardFn backward) {
    std::vector<std::size_t> ids;
    std::vector<const Tensor*> inputs;
    ids.reserve(parents.size());
    inputs.reserve(parents.size());
    for (const Var& p : parents) {
        if (p.tape != this || p.id >= nodes_.size()) throw Error("tape: " + op + " received a variable from another tape");
        ids.push_back(p.id);
        inputs.push_back(&nodes_[p.id].value);
    }
    Tensor value = forward(inputs);
    nodes_.push_back(Node{std::move(op), std::move(ids), std::move(value), std::move(forward), std::move(backward)});
    return Var{this, nodes_.size() - 1};
}

std::vector<Tensor> Tape::grad(Var output, std::span<const Var> inputs) const {
    if (output.tape != this) throw Error("grad: output belongs to another tape");
    const Tensor& out = nodes_[output.id].value;
    if (out.size() != 1) throw Error("grad: output must be a single value, got shape " + to_string(out.shape()));

    // Mark nodes that lie on a path from a requested input to the output.
    const std::size_t n = output.id + 1;
    std::vector<char> reaches(n, 0);
    std::vector<char> requested(n, 0);
    for (const Var& v : inputs) {
        if (v.tape != this) throw Error("grad: input belongs to another tape");
        if (v.id < n) reaches[v.id] = requested[v.id] = 1;
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p : nodes_[i].parents)
            if (reaches[p]) reaches[i] = 1;

    std::vector<Tensor> grads(n);
    grads[output.id] = Tensor(out.shape(), 1.0);
    std::vector<const Tensor*> parent_values;
    std::vector<char> needs;
    for (std::size_t i = n; i-- > 0;) {
        const Node& node = nodes_[i];
        if (grads[i].is_null() || node.parents.empty() || !reaches[i]) continue;
        parent_values.clear();
        needs.clear();
        for (std::size_t p : node.parents) {
            parent_values.push_back(&nodes_[p].value);
            needs.push_back(reaches[p]);
        }
        std::vector<Tensor> pg = node.backward(BackwardArgs{parent_values, node.value, grads[i], needs});
        for (std::size_t k = 0; k < node.parents.size(); ++k) {
            if (!needs[k] || pg[k].is_null()) continue;
            Tensor& acc = grads[node.parents[k]];
            acc = acc.is_null() ? std::move(pg[k]) : add(acc, pg[k]);
        }
        if (!requested[i] && i != output.id) grads[i] = Tensor();
    }

    std::vector<Tensor> result;
    result.reserve(inputs.size());
    for (const Var& v : inputs) {
        if (v.id < n && !grads[v.id].is_null())
            result.push_back(grads[v.id]);
        else
            result.emplace_back(nodes_[v.id].value.shape(), 0.0);
    }
    return result;
}

std::vector<Tensor> Tape::replay() const {
    std::vector<Tensor> values;
    values.reserve(nodes_.size());
    std::vector<const Tensor*> inputs;
    for (const Node& node : nodes_) {
        if (!node.forward) {
            values.push_back(node.value);
            continue;
        }
        inputs.clear();
        for (std::size_t p : node.parents) inputs.push_back(&values[p]);
        values.push_back(node.forward(inputs));
    }
    return values;
}

namespace ad {

namespace {

Tensor sum_to_scalar_like(const Tensor& g) { return Tensor::scalar(noisegeo::sum(g)); }

}  // namespace

Var add(Var a, Var b) {
    return a.tape->apply(
        "add", {a, b}, [](auto in) { return noisegeo::add(*in[0], *in[1]); },
        [](const BackwardArgs& args) { return std::vector<Tensor>{args.grad, args.grad}; });
}

Var sub(Var a, Var b) {
    return a.tape->apply(
        "sub", {a, b}, [](auto in) { return noisegeo::subtract(*in[0], *in[1]); },
        [](const BackwardArgs& args) { return std::vector<Tensor>{args.grad, noisegeo::scale(args.grad, -1.0)}; });
}

Var mul(Var a, Var b) {
    return a.tape->apply(
        "mul", {a, b}, [](auto in) { return noisegeo::multiply(*in[0], *in[1]); },
        [](const BackwardArgs& args) {
            return std::vector<Tensor>{args.needs[0] ? multiply(args.grad, *args.inputs[1]) : Tensor(),
                                       args.needs[1] ? multiply(args.grad, *args.inputs[0]) : Tensor()};
        });
}

Var scale(Var a, double factor) {
    return a.tape->apply(
        "scale", {a}, [factor](auto in) { return noisegeo::scale(*in[0], factor); },
        [factor](const BackwardArgs& args) { return std::vector<Tensor>{noisegeo::scale(args.grad, factor)}; });
}

Var add_constant(Var a, double c) {
    return a.tape->apply(
        "add_constant", {a},
        [c](auto in) {
            Tensor out = *in[0];
            for (double& v : out.data()) v += c;
            return out;
        },
        [](const BackwardArgs& args) { return std::vector<Tensor>{args.grad}; });
}

Var mul_scalar(Var a, Var s) {
    if (s.value().size() != 1) throw ShapeError("mul_scalar: expected a single value, got " + to_string(s.shape()));
    return a.tape->apply(
        "mul_scalar", {a, s}, [](auto in) { return noisegeo::scale(*in[0], (*in[1])[0]); },
        [](const BackwardArgs& args) {
            Tensor gs;
            if (args.needs[1]) {
                double acc = 0.0;
                for (std::size_t i = 0; i < args.grad.size(); ++i) acc += args.grad[i] * (*args.inputs[0])[i];
                gs = Tensor(args.inputs[1]->shape(), acc);
            }
            return std::vector<Tensor>{args.needs[0] ? noisegeo::scale(args.grad, (*args.inputs[1])[0]) : Tensor(), gs};
        });
}

Var dense(Var x, Var weight, Var bias) {
    return x.tape->apply(
        "dense", {x, weight, bias}, [](auto in) { return dense_forward(*in[0], *in[1], *in[2]); },
        [](const BackwardArgs& args) {
            const Tensor& g = args.grad;
            Tensor gx = args.needs[0] ? matmul(g, *args.inputs[1]) : Tensor();
            Tensor gw = args.needs[1] ? transposed_matmul(g, *args.inputs[0]) : Tensor();
            Tensor gb = args.needs[2] ? reduce_sum(g, 0).reshaped(args.inputs[2]->shape()) : Tensor();
            return std::vector<Tensor>{std::move(gx), std::move(gw), std::move(gb)};
        });
}

Var matmul(Var a, Var b) {
    return a.tape->apply(
        "matmul", {a, b}, [](auto in) { return noisegeo::matmul(*in[0], *in[1]); },
        [](const BackwardArgs& args) {
            return std::vector<Tensor>{args.needs[0] ? matmul_transposed(args.grad, *args.inputs[1]) : Tensor(),
                                       args.needs[1] ? transposed_matmul(*args.inputs[0], args.grad) : Tensor()};
        });
}

Var leaky_relu(Var x, double slope) {
    return x.tape->apply(
        "leaky_relu", {x}, [slope](auto in) { return noisegeo::leaky_relu(*in[0], slope); },
        [slope](const BackwardArgs& args) {
            return std::vector<Tensor>{leaky_relu_backward(*args.inputs[0], args.grad, slope)};
        });
}

Var reshape(Var x, Shape shape) {
    return x.tape->apply(
        "reshape", {x}, [shape](auto in) { return noisegeo::reshape(*in[0], shape); },
        [](const BackwardArgs& args) { return std::vector<Tensor>{args.grad.reshaped(args.inputs[0]->shape())}; });
}

Var conv2d(Var x, Var weight, Var bias) {
    return x.tape->apply(
        "conv2d", {x, weight, bias}, [](auto in) { return conv3x3(*in[0], *in[1], *in[2]); },
        [](const BackwardArgs& args) {
            const Tensor& g = args.grad;
            return std::vector<Tensor>{
                args.needs[0] ? conv3x3_grad_input(g, *args.inputs[1], args.inputs[0]->shape()) : Tensor(),
                args.needs[1] ? conv3x3_grad_weight(*args.inputs[0], g, args.inputs[1]->shape()) : Tensor(),
                args.needs[2] ? conv3x3_grad_bias(g).reshaped(args.inputs[2]->shape()) : Tensor()};
        });
}

Var upsample2x(Var x) {
    return x.tape->apply(
        "upsample2x", {x}, [](auto in) { return noisegeo::upsample2x(*in[0]); },
        [](const BackwardArgs& args) { return std::vector<Tensor>{upsample2x_backward(args.grad)}; });
}

Var sum(Var x) {
    return x.tape->apply(
        "sum", {x}, [](auto in) { return sum_to_scalar_like(*in[0]); },
        [](const BackwardArgs& args) { return std::vector<Tensor>{Tensor(args.inputs[0]->shape(), args.grad[0])}; });
}

Var mean(Var x) {
    return x.tape->apply(
        "mean", {x}, [](auto in) { return Tensor::scalar(noisegeo::mean(*in[0])); },
        [](const BackwardArgs& args) {
            const double n = static_cast<double>(args.inputs[0]->size());
            return std::vector<Tensor>{Tensor(args.inputs[0]->shape(), args.grad[0] / n)};
        });
}

Var square(Var x) {
    return x.tape->apply(
        "square", {x}, [](auto in) { return multiply(*in[0], *in[0]); },
        [](const BackwardArgs& args) { return std::vector<Tensor>{noisegeo::scale(multiply(args.grad, *args.inputs[0]), 2.0)}; });
}

Var softplus(Var x) {
    return x.tape->apply(
        "softplus", {x},
        [](auto in) {
            Tensor out = *in[0];
            for (double& v : out.data()) v = v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
            return out;
        },
        [](const BackwardArgs& args) {
            Tensor g = args.grad;
            const Tensor& x = *args.inputs[0];
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 / (1.0 + std::exp(-x[i]));
            return std::vector<Tensor>{std::move(g)};
        });
}

Var sigmoid(Var x) {
    return x.tape->apply(
        "sigmoid", {x},
        [](auto in) {
            Tensor out = *in[0];
            for (double& v : out.data()) v = 1.0 / (1.0 + std::exp(-v));
            return out;
        },
        [](const BackwardArgs& args) {
            Tensor g = args.grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= args.output[i] * (1.0 - args.output[i]);
            return std::vector<Tensor>{std::move(g)};
        });
}

Var row_sum(Var x) {
    return x.tape->apply(
        "row_sum", {x},
        [](auto in) {
            const Tensor& t = *in[0];
            const std::size_t b = t.dim(0), inner = t.size() / b;
            Tensor out({b});
            for (std::size_t i = 0; i < b; ++i)
                for (std::size_t j = 0; j < inner; ++j) out[i] += t[i * inner + j];
            return out;
        },
        [](const BackwardArgs& args) {
            const Tensor& t = *args.inputs[0];
            const std::size_t b = t.dim(0), inner = t.size() / b;
            Tensor g(t.shape());
            for (std::size_t i = 0; i < b; ++i)
                for (std::size_t j = 0; j < inner; ++j) g[i * inner + j] = args.grad[i];
            return std::vector<Tensor>{std::move(g)};
        });
}

}  // namespace ad

}  // namespace noisegeo
