// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mteo/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "mteo/kernels.hpp"

namespace mteo::ad {

Parameter::Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape(), 0.0) {}

const Tensor& Var::value() const {
    if (!tape_) throw Error("Var: use of an empty variable");
    return tape_->value(*this);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(*this); }

// ---------------------------------------------------------------- tape

const Tape::Node& Tape::node(const Var& v) const {
    if (v.tape_ != this) throw Error("Tape: variable belongs to a different tape");
    if (v.generation_ != generation_ || v.id_ >= nodes_.size())
        throw Error("Tape: stale variable (tape was cleared after it was created)");
    return nodes_[v.id_];
}

Var Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1), generation_);
}

Var Tape::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::leaf(Tensor value) {
    Node n;
    n.grad = Tensor(value.shape(), 0.0);
    n.value = std::move(value);
    n.requires_grad = true;
    n.is_leaf = true;
    return push(std::move(n));
}

Var Tape::param(Parameter& p) {
    if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape(), 0.0);
    Node n;
    n.value = p.value;
    n.param = &p;
    n.requires_grad = true;
    n.is_leaf = true;
    return push(std::move(n));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    n.inputs.reserve(inputs.size());
    for (const auto& in : inputs) {
        const auto& src = node(in);
        n.requires_grad = n.requires_grad || src.requires_grad;
        n.inputs.push_back(in.id_);
    }
    if (n.requires_grad) n.backward = std::move(backward);
    return push(std::move(n));
}

const Tensor& Tape::value(const Var& v) const { return node(v).value; }

bool Tape::requires_grad(const Var& v) const { return node(v).requires_grad; }

const Tensor& Tape::grad(const Var& v) const {
    const auto& n = node(v);
    if (!n.is_leaf) throw Error("Tape::grad: gradients are only retained for leaves");
    if (n.param) return n.param->grad;
    return n.grad;
}

void Tape::zero_grad() {
    for (auto& n : nodes_) {
        if (!n.is_leaf) continue;
        if (n.param)
            n.param->zero_grad();
        else
            n.grad.fill(0.0);
    }
}

void Tape::clear() {
    nodes_.clear();
    ++generation_;
}

void Tape::backward(const Var& loss) {
    const auto& root = node(loss);
    if (root.value.numel() != 1)
        throw Error("backward: loss must be scalar, got shape " + shape_str(root.value.shape()));
    if (!root.requires_grad) throw Error("backward: loss is detached from the tape");

    std::vector<Tensor> grads(loss.id_ + 1);
    grads[loss.id_] = Tensor(root.value.shape(), 1.0);

    std::vector<const Tensor*> in_values;
    std::vector<Tensor*> in_grads;
    for (std::size_t idx = loss.id_ + 1; idx-- > 0;) {
        auto& n = nodes_[idx];
        if (grads[idx].empty() || !n.requires_grad) continue;
        if (n.is_leaf) {
            Tensor& dst = n.param ? n.param->grad : n.grad;
            auto d = dst.data();
            auto s = grads[idx].data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
            continue;
        }
        in_values.clear();
        in_grads.clear();
        for (auto in : n.inputs) {
            auto& src = nodes_[in];
            in_values.push_back(&src.value);
            if (src.requires_grad) {
                if (grads[in].empty()) grads[in] = Tensor(src.value.shape(), 0.0);
                in_grads.push_back(&grads[in]);
            } else {
                in_grads.push_back(nullptr);
            }
        }
        n.backward(BackwardContext{n.value, grads[idx], in_values, in_grads});
        grads[idx] = Tensor();
    }
}

// ---------------------------------------------------------------- helpers

namespace {

Tape& tape_of(const Var& a) {
    if (!a.valid()) throw Error("autodiff: empty variable");
    return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
    if (!a.valid() || !b.valid()) throw Error("autodiff: empty variable");
    if (a.tape() != b.tape()) throw Error("autodiff: operands recorded on different tapes");
    return *a.tape();
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
    throw Error(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

struct Broadcast {
    std::size_t rows_a, rows_b, rows, cols;
    Shape out;
};

Broadcast broadcast_plan(const char* op, const Tensor& a, const Tensor& b) {
    if (a.rank() > 2 || b.rank() > 2) shape_error(op, a.shape(), b.shape());
    if (a.cols() != b.cols()) shape_error(op, a.shape(), b.shape());
    Broadcast p{a.rows(), b.rows(), std::max(a.rows(), b.rows()), a.cols(), {}};
    if (p.rows_a != p.rows_b && p.rows_a != 1 && p.rows_b != 1) shape_error(op, a.shape(), b.shape());
    if (a.shape() == b.shape())
        p.out = a.shape();
    else
        p.out = {p.rows, p.cols};
    return p;
}

// Adds g (rows x cols) into dst, summing over rows if dst is a broadcast row.
void reduce_into(Tensor& dst, const Tensor& g, std::size_t rows, std::size_t cols, double sign = 1.0) {
    auto d = dst.data();
    auto s = g.data();
    if (dst.numel() == g.numel()) {
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += sign * s[i];
        return;
    }
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) d[c] += sign * s[r * cols + c];
}

template <typename F>
Var binary_elementwise(const char* op, const Var& a, const Var& b, F f, BackwardFn bw) {
    auto& tape = tape_of(a, b);
    const auto& av = a.value();
    const auto& bv = b.value();
    const auto plan = broadcast_plan(op, av, bv);
    Tensor out(plan.out);
    auto o = out.data();
    auto x = av.data();
    auto y = bv.data();
    for (std::size_t r = 0; r < plan.rows; ++r) {
        const std::size_t ra = plan.rows_a == 1 ? 0 : r;
        const std::size_t rb = plan.rows_b == 1 ? 0 : r;
        for (std::size_t c = 0; c < plan.cols; ++c)
            o[r * plan.cols + c] = f(x[ra * plan.cols + c], y[rb * plan.cols + c]);
    }
    const Var inputs[] = {a, b};
    return tape.record(std::move(out), inputs, std::move(bw));
}

template <typename F, typename D>
Var unary_elementwise(const Var& a, F f, D df) {
    auto& tape = tape_of(a);
    Tensor out(a.value().shape());
    auto o = out.data();
    auto x = a.value().data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(x[i]);
    const Var inputs[] = {a};
    return tape.record(std::move(out), inputs, [df](const BackwardContext& ctx) {
        auto gin = ctx.input_grads[0]->data();
        auto g = ctx.output_grad.data();
        auto x = ctx.inputs[0]->data();
        auto y = ctx.output.data();
        for (std::size_t i = 0; i < gin.size(); ++i) gin[i] += g[i] * df(x[i], y[i]);
    });
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

// ---------------------------------------------------------------- primitives

Var add(const Var& a, const Var& b) {
    return binary_elementwise("add", a, b, [](double x, double y) { return x + y; },
                              [](const BackwardContext& ctx) {
                                  const auto rows = ctx.output.rows(), cols = ctx.output.cols();
                                  if (ctx.input_grads[0]) reduce_into(*ctx.input_grads[0], ctx.output_grad, rows, cols);
                                  if (ctx.input_grads[1]) reduce_into(*ctx.input_grads[1], ctx.output_grad, rows, cols);
                              });
}

Var sub(const Var& a, const Var& b) {
    return binary_elementwise("sub", a, b, [](double x, double y) { return x - y; },
                              [](const BackwardContext& ctx) {
                                  const auto rows = ctx.output.rows(), cols = ctx.output.cols();
                                  if (ctx.input_grads[0]) reduce_into(*ctx.input_grads[0], ctx.output_grad, rows, cols);
                                  if (ctx.input_grads[1])
                                      reduce_into(*ctx.input_grads[1], ctx.output_grad, rows, cols, -1.0);
                              });
}

Var mul(const Var& a, const Var& b) {
    return binary_elementwise(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](const BackwardContext& ctx) {
            const auto rows = ctx.output.rows(), cols = ctx.output.cols();
            const auto& av = *ctx.inputs[0];
            const auto& bv = *ctx.inputs[1];
            const bool ab = av.rows() == 1 && rows > 1;
            const bool bb = bv.rows() == 1 && rows > 1;
            auto g = ctx.output_grad.data();
            if (auto* ga = ctx.input_grads[0]) {
                auto d = ga->data();
                auto y = bv.data();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c)
                        d[(ab ? 0 : r) * cols + c] += g[r * cols + c] * y[(bb ? 0 : r) * cols + c];
            }
            if (auto* gb = ctx.input_grads[1]) {
                auto d = gb->data();
                auto x = av.data();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c)
                        d[(bb ? 0 : r) * cols + c] += g[r * cols + c] * x[(ab ? 0 : r) * cols + c];
            }
        });
}

Var scale(const Var& a, double s) {
    return unary_elementwise(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var matmul(const Var& a, const Var& b) {
    auto& tape = tape_of(a, b);
    const auto& av = a.value();
    const auto& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) shape_error("matmul", av.shape(), bv.shape());
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    Tensor out({m, n});
    kernels::matmul(av.data(), bv.data(), out.data(), m, k, n);
    const Var inputs[] = {a, b};
    return tape.record(std::move(out), inputs, [m, k, n](const BackwardContext& ctx) {
        if (ctx.input_grads[0])
            kernels::matmul_nt_acc(ctx.output_grad.data(), ctx.inputs[1]->data(), ctx.input_grads[0]->data(), m, n, k);
        if (ctx.input_grads[1])
            kernels::matmul_tn_acc(ctx.inputs[0]->data(), ctx.output_grad.data(), ctx.input_grads[1]->data(), m, k, n);
    });
}

Var affine(const Var& x, const Var& w, const Var& b) {
    auto& tape = tape_of(x, w);
    if (b.tape() != &tape) throw Error("affine: operands recorded on different tapes");
    const auto& xv = x.value();
    const auto& wv = w.value();
    const auto& bv = b.value();
    if (xv.rank() != 2 || wv.rank() != 2 || xv.cols() != wv.rows()) shape_error("affine", xv.shape(), wv.shape());
    if (bv.numel() != wv.cols()) shape_error("affine(bias)", wv.shape(), bv.shape());
    const std::size_t m = xv.rows(), k = xv.cols(), n = wv.cols();
    Tensor out({m, n});
    kernels::matmul(xv.data(), wv.data(), out.data(), m, k, n);
    auto o = out.data();
    auto bias = bv.data();
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) o[r * n + c] += bias[c];
    const Var inputs[] = {x, w, b};
    return tape.record(std::move(out), inputs, [m, k, n](const BackwardContext& ctx) {
        if (ctx.input_grads[0])
            kernels::matmul_nt_acc(ctx.output_grad.data(), ctx.inputs[1]->data(), ctx.input_grads[0]->data(), m, n, k);
        if (ctx.input_grads[1])
            kernels::matmul_tn_acc(ctx.inputs[0]->data(), ctx.output_grad.data(), ctx.input_grads[1]->data(), m, k, n);
        if (ctx.input_grads[2]) reduce_into(*ctx.input_grads[2], ctx.output_grad, m, n);
    });
}

Var sin(const Var& a) {
    return unary_elementwise(a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Var cos(const Var& a) {
    return unary_elementwise(a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Var exp(const Var& a) {
    return unary_elementwise(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
    for (double v : a.value().data())
        if (!(v > 0.0)) throw Error("log: non-positive input");
    return unary_elementwise(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var silu(const Var& a) {
    return unary_elementwise(
        a, [](double x) { return x * sigmoid(x); },
        [](double x, double) {
            const double s = sigmoid(x);
            return s * (1.0 + x * (1.0 - s));
        });
}

Var square(const Var& a) {
    return unary_elementwise(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(const Var& a) {
    return unary_elementwise(
        a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var sum(const Var& a) {
    auto& tape = tape_of(a);
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    const Var inputs[] = {a};
    return tape.record(Tensor::scalar(s), inputs, [](const BackwardContext& ctx) {
        const double g = ctx.output_grad[0];
        for (auto& d : ctx.input_grads[0]->data()) d += g;
    });
}

Var mean(const Var& a) {
    auto& tape = tape_of(a);
    const double n = static_cast<double>(a.value().numel());
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    const Var inputs[] = {a};
    return tape.record(Tensor::scalar(s / n), inputs, [n](const BackwardContext& ctx) {
        const double g = ctx.output_grad[0] / n;
        for (auto& d : ctx.input_grads[0]->data()) d += g;
    });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
    if (parts.empty()) throw Error("concat: no operands");
    if (axis > 1) throw Error("concat: axis must be 0 or 1");
    auto& tape = tape_of(parts[0]);
    const auto& first = parts[0].value();
    std::size_t rows = 0, cols = 0;
    for (const auto& p : parts) {
        if (p.tape() != &tape) throw Error("concat: operands recorded on different tapes");
        const auto& v = p.value();
        if (v.rank() > 2) shape_error("concat", first.shape(), v.shape());
        if (axis == 1) {
            if (v.rows() != first.rows()) shape_error("concat", first.shape(), v.shape());
            rows = v.rows();
            cols += v.cols();
        } else {
            if (v.cols() != first.cols()) shape_error("concat", first.shape(), v.shape());
            rows += v.rows();
            cols = v.cols();
        }
    }
    Tensor out({rows, cols});
    auto o = out.data();
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const auto& v = p.value();
        auto s = v.data();
        if (axis == 1) {
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < v.cols(); ++c) o[r * cols + offset + c] = s[r * v.cols() + c];
            offset += v.cols();
        } else {
            std::copy(s.begin(), s.end(), o.begin() + static_cast<std::ptrdiff_t>(offset * cols));
            offset += v.rows();
        }
    }
    return tape.record(std::move(out), parts, [axis, rows, cols](const BackwardContext& ctx) {
        auto g = ctx.output_grad.data();
        std::size_t offset = 0;
        for (std::size_t i = 0; i < ctx.inputs.size(); ++i) {
            const auto& v = *ctx.inputs[i];
            if (auto* gi = ctx.input_grads[i]) {
                auto d = gi->data();
                if (axis == 1) {
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < v.cols(); ++c) d[r * v.cols() + c] += g[r * cols + offset + c];
                } else {
                    for (std::size_t j = 0; j < d.size(); ++j) d[j] += g[offset * cols + j];
                }
            }
            offset += axis == 1 ? v.cols() : v.rows();
        }
    });
}

Var slice(const Var& a, std::size_t axis, std::size_t start, std::size_t length) {
    auto& tape = tape_of(a);
    const auto& v = a.value();
    if (v.rank() > 2 || axis > 1) throw Error("slice: expects a rank-2 tensor and axis 0 or 1");
    const std::size_t rows = v.rows(), cols = v.cols();
    const std::size_t extent = axis == 0 ? rows : cols;
    if (length == 0 || start + length > extent)
        throw Error("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                    ") out of bounds for shape " + shape_str(v.shape()));
    const std::size_t out_rows = axis == 0 ? length : rows;
    const std::size_t out_cols = axis == 1 ? length : cols;
    Tensor out({out_rows, out_cols});
    auto o = out.data();
    auto s = v.data();
    for (std::size_t r = 0; r < out_rows; ++r)
        for (std::size_t c = 0; c < out_cols; ++c)
            o[r * out_cols + c] = axis == 0 ? s[(start + r) * cols + c] : s[r * cols + start + c];
    const Var inputs[] = {a};
    return tape.record(std::move(out), inputs, [=](const BackwardContext& ctx) {
        auto g = ctx.output_grad.data();
        auto d = ctx.input_grads[0]->data();
        for (std::size_t r = 0; r < out_rows; ++r)
            for (std::size_t c = 0; c < out_cols; ++c) {
                const std::size_t src = axis == 0 ? (start + r) * cols + c : r * cols + start + c;
                d[src] += g[r * out_cols + c];
            }
    });
}

Var detach(const Var& a) { return tape_of(a).constant(a.value()); }

}  // namespace mteo::ad
