// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mteo/tensor.hpp"

namespace mteo::ad {

/// Named learnable tensor with its gradient buffer.
struct Parameter {
    Parameter() = default;
    Parameter(std::string name, Tensor value);

    std::string name;
    Tensor value;
    Tensor grad;

    void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; invalid after Tape::clear().
class Var {
public:
    Var() = default;

    bool valid() const { return tape_ != nullptr; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;
    Tape* tape() const { return tape_; }
    std::uint32_t id() const { return id_; }

private:
    friend class Tape;
    Var(Tape* tape, std::uint32_t id, std::uint64_t generation) : tape_(tape), id_(id), generation_(generation) {}

    Tape* tape_ = nullptr;
    std::uint32_t id_ = 0;
    std::uint64_t generation_ = 0;
};

/// What a backward rule sees: forward values and the gradient buffers to accumulate into.
/// `input_grads[i]` is null when input i does not require a gradient.
struct BackwardContext {
    const Tensor& output;
    const Tensor& output_grad;
    std::span<const Tensor* const> inputs;
    std::span<Tensor* const> input_grads;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

/// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
/// index order is a valid reverse topological order.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Detached value; never receives a gradient.
    Var constant(Tensor value);
    /// Differentiable leaf whose gradient is read back with grad().
    Var leaf(Tensor value);
    /// Differentiable leaf bound to a Parameter; backward accumulates into param.grad.
    Var param(Parameter& p);

    /// Appends an operation node. A backward rule is kept only if some input requires grad.
    Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

    /// Populates gradients of every leaf and parameter reachable from `loss`.
    /// Leaf and parameter gradients accumulate across calls until zeroed.
    void backward(const Var& loss);

    const Tensor& value(const Var& v) const;
    bool requires_grad(const Var& v) const;
    /// Accumulated gradient of a leaf (zeros if backward never reached it).
    const Tensor& grad(const Var& v) const;
    void zero_grad();

    /// Frees all nodes; Vars created before the call become stale.
    void clear();
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;  // persistent; only allocated for leaves
        std::vector<std::uint32_t> inputs;
        BackwardFn backward;
        Parameter* param = nullptr;
        bool requires_grad = false;
        bool is_leaf = false;
    };

    const Node& node(const Var& v) const;
    Var push(Node n);

    std::vector<Node> nodes_;
    std::uint64_t generation_ = 1;
};

// Primitive operations. Binary elementwise ops accept equal shapes or a
// single-row operand broadcast over the batch (leading) extent of the other.

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var matmul(const Var& a, const Var& b);
/// y = x W + b, with x [B x in], W [in x out], b [1 x out].
Var affine(const Var& x, const Var& w, const Var& b);
Var sin(const Var& a);
Var cos(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var silu(const Var& a);
Var square(const Var& a);
Var abs(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
/// Concatenates rank-2 tensors along `axis` (0 = rows, 1 = columns).
Var concat(std::span<const Var> parts, std::size_t axis);
/// Rank-2 slice [start, start + length) along `axis`.
Var slice(const Var& a, std::size_t axis, std::size_t start, std::size_t length);
Var detach(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

}  // namespace mteo::ad
