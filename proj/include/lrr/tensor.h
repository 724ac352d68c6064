// tensor.h — reverse-mode autodiff on a dynamically built tape.
//
// Ops execute eagerly; each result node stores its parents and a backward
// closure. backward() topologically sorts the graph, accumulates grads, and
// clears the tape. Templated on the scalar type: f32 for training, f64 for
// gradient checks.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lrr/common.h"
#include "lrr/kernels.h"
#include "lrr/rng.h"

namespace lrr {

enum class DType { f32, f64 };

template <typename T>
constexpr DType dtype_of() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

template <typename T>
struct TensorNode {
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void()> backward_fn;

    int64_t numel() const {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    void ensure_grad() {
        if (grad.empty()) grad.assign(static_cast<size_t>(numel()), T(0));
    }
};

template <typename T>
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        return filled(std::move(shape), T(0), requires_grad);
    }

    static Tensor filled(std::vector<int> shape, T v, bool requires_grad = false) {
        Tensor t = raw(std::move(shape), requires_grad);
        std::fill(t.node_->value.begin(), t.node_->value.end(), v);
        return t;
    }

    static Tensor from_data(std::vector<int> shape, std::vector<T> data,
                            bool requires_grad = false) {
        Tensor t;
        t.node_ = std::make_shared<TensorNode<T>>();
        t.node_->shape = std::move(shape);
        check(static_cast<int64_t>(data.size()) == t.node_->numel(),
              "from_data: buffer size ", data.size(), " does not match shape ",
              shape_str(t.node_->shape));
        t.node_->value = std::move(data);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(T v, bool requires_grad = false) {
        return from_data({1}, {v}, requires_grad);
    }

    static Tensor randn(std::vector<int> shape, Rng& rng, T stddev, bool requires_grad = false) {
        Tensor t = raw(std::move(shape), requires_grad);
        for (T& v : t.node_->value) v = static_cast<T>(rng.gauss()) * stddev;
        return t;
    }

    // Uninitialized-value node for op results.
    static Tensor raw(std::vector<int> shape, bool requires_grad) {
        Tensor t;
        t.node_ = std::make_shared<TensorNode<T>>();
        for (int d : shape) check(d > 0, "tensor dims must be positive, got ", shape_str(shape));
        t.node_->shape = std::move(shape);
        t.node_->value.resize(static_cast<size_t>(t.node_->numel()));
        t.node_->requires_grad = requires_grad;
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return node_->numel(); }
    bool requires_grad() const { return node_->requires_grad; }

    std::vector<T>& value() { return node_->value; }
    const std::vector<T>& value() const { return node_->value; }
    std::vector<T>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    bool has_grad() const { return !node_->grad.empty(); }

    T item() const {
        check(numel() == 1, "item: tensor has ", numel(), " elements");
        return node_->value[0];
    }

    std::shared_ptr<TensorNode<T>> node() const { return node_; }

  private:
    std::shared_ptr<TensorNode<T>> node_;
};

enum class OpKind {
    matmul,
    add,
    mul,
    concat,
    slice,
    embedding_lookup,
    softmax,
    layer_norm,
    gelu,
    conv2d,
    avg_pool2d,
    linear,
    cross_entropy,
    scale,
};

inline const char* op_kind_name(OpKind k) {
    switch (k) {
        case OpKind::matmul: return "matmul";
        case OpKind::add: return "add";
        case OpKind::mul: return "mul";
        case OpKind::concat: return "concat";
        case OpKind::slice: return "slice";
        case OpKind::embedding_lookup: return "embedding_lookup";
        case OpKind::softmax: return "softmax";
        case OpKind::layer_norm: return "layer_norm";
        case OpKind::gelu: return "gelu";
        case OpKind::conv2d: return "conv2d";
        case OpKind::avg_pool2d: return "avg_pool2d";
        case OpKind::linear: return "linear";
        case OpKind::cross_entropy: return "cross_entropy";
        case OpKind::scale: return "scale";
    }
    return "?";
}

inline std::vector<OpKind> all_op_kinds() {
    return {OpKind::matmul,  OpKind::add,        OpKind::mul,     OpKind::concat,
            OpKind::slice,   OpKind::embedding_lookup, OpKind::softmax, OpKind::layer_norm,
            OpKind::gelu,    OpKind::conv2d,     OpKind::avg_pool2d, OpKind::linear,
            OpKind::cross_entropy, OpKind::scale};
}

struct OpAttrs {
    bool trans_a = false;             // matmul
    bool trans_b = false;             // matmul
    int axis = 0;                     // concat
    std::vector<int> offsets;         // slice
    std::vector<int> sizes;           // slice
    std::vector<int> ids;             // embedding_lookup
    std::vector<int> targets;         // cross_entropy
    std::shared_ptr<const std::vector<uint8_t>> mask;  // softmax: per-element; cross_entropy: per-row
    double eps = 1e-5;                // layer_norm
    double factor = 1.0;              // scale
    int stride = 1;                   // conv2d / avg_pool2d
    int pad = 0;                      // conv2d
    int kernel = 2;                   // avg_pool2d
};

namespace detail {

template <typename T>
void check_finite_input(const char* op, const Tensor<T>& t) {
    for (T v : t.value()) {
        if (!std::isfinite(v)) fail(op, ": non-finite input value");
    }
}

template <typename T>
bool any_requires_grad(const std::vector<Tensor<T>>& inputs) {
    for (const auto& t : inputs) {
        if (t.requires_grad()) return true;
    }
    return false;
}

// Builds the result node; records parents + closure only when needed.
template <typename T>
Tensor<T> make_result(std::vector<int> shape, const std::vector<Tensor<T>>& inputs,
                      std::function<void()> backward_fn) {
    Tensor<T> out = Tensor<T>::raw(std::move(shape), any_requires_grad(inputs));
    if (out.requires_grad()) {
        auto node = out.node();
        for (const auto& in : inputs) node->parents.push_back(in.node());
        node->backward_fn = std::move(backward_fn);
    }
    return out;
}

}  // namespace detail

// ---- individual ops ----

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_a = false,
                 bool trans_b = false) {
    detail::check_finite_input("matmul", a);
    detail::check_finite_input("matmul", b);
    check(a.rank() == 2 && b.rank() == 2, "matmul: expects rank-2 inputs, got ",
          shape_str(a.shape()), " and ", shape_str(b.shape()));
    const int m = trans_a ? a.dim(1) : a.dim(0);
    const int k = trans_a ? a.dim(0) : a.dim(1);
    const int kb = trans_b ? b.dim(1) : b.dim(0);
    const int n = trans_b ? b.dim(0) : b.dim(1);
    check(k == kb, "matmul: inner dims differ, ", shape_str(a.shape()), (trans_a ? "^T" : ""),
          " * ", shape_str(b.shape()), (trans_b ? "^T" : ""));
    auto an = a.node();
    auto bn = b.node();
    Tensor<T> out = detail::make_result<T>({m, n}, {a, b}, nullptr);
    kernels::matmul(an->value.data(), bn->value.data(), out.value().data(), m, k, n, trans_a,
                    trans_b, false);
    if (out.requires_grad()) {
        TensorNode<T>* self = out.node().get();
        out.node()->backward_fn = [self, an, bn, m, k, n, trans_a, trans_b]() {
            const T* g = self->grad.data();
            if (an->requires_grad) {
                an->ensure_grad();
                if (!trans_a && !trans_b) {
                    kernels::matmul(g, bn->value.data(), an->grad.data(), m, n, k, false, true,
                                    true);
                } else if (!trans_a && trans_b) {
                    kernels::matmul(g, bn->value.data(), an->grad.data(), m, n, k, false, false,
                                    true);
                } else if (trans_a && !trans_b) {
                    kernels::matmul(bn->value.data(), g, an->grad.data(), k, n, m, false, true,
                                    true);
                } else {
                    kernels::matmul(bn->value.data(), g, an->grad.data(), k, n, m, true, true,
                                    true);
                }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                if (!trans_a && !trans_b) {
                    kernels::matmul(an->value.data(), g, bn->grad.data(), k, m, n, true, false,
                                    true);
                } else if (!trans_a && trans_b) {
                    kernels::matmul(g, an->value.data(), bn->grad.data(), n, m, k, true, false,
                                    true);
                } else if (trans_a && !trans_b) {
                    kernels::matmul(an->value.data(), g, bn->grad.data(), k, m, n, false, false,
                                    true);
                } else {
                    kernels::matmul(g, an->value.data(), bn->grad.data(), n, m, k, true, true,
                                    true);
                }
            }
        };
    }
    return out;
}

// add: identical shapes, or b is a rank-1 bias broadcast over the trailing dim.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_finite_input("add", a);
    detail::check_finite_input("add", b);
    const bool bias = (b.rank() == 1 && a.rank() > 1 && b.dim(0) == a.shape().back());
    check(bias || a.shape() == b.shape(), "add: shapes ", shape_str(a.shape()), " and ",
          shape_str(b.shape()), " are neither equal nor trailing-dim bias");
    auto an = a.node();
    auto bn = b.node();
    Tensor<T> out = detail::make_result<T>(a.shape(), {a, b}, nullptr);
    const int64_t total = a.numel();
    const int nb = static_cast<int>(b.numel());
    T* o = out.value().data();
    const T* av = an->value.data();
    const T* bv = bn->value.data();
    if (bias) {
        for (int64_t i = 0; i < total; ++i) o[i] = av[i] + bv[i % nb];
    } else {
        for (int64_t i = 0; i < total; ++i) o[i] = av[i] + bv[i];
    }
    if (out.requires_grad()) {
        TensorNode<T>* self = out.node().get();
        out.node()->backward_fn = [self, an, bn, total, nb, bias]() {
            const T* g = self->grad.data();
            if (an->requires_grad) {
                an->ensure_grad();
                T* da = an->grad.data();
                for (int64_t i = 0; i < total; ++i) da[i] += g[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                T* db = bn->grad.data();
                if (bias) {
                    for (int64_t i = 0; i < total; ++i) db[i % nb] += g[i];
                } else {
                    for (int64_t i = 0; i < total; ++i) db[i] += g[i];
                }
            }
        };
    }
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_finite_input("mul", a);
    detail::check_finite_input("mul", b);
    check(a.shape() == b.shape(), "mul: shape mismatch ", shape_str(a.shape()), " vs ",
          shape_str(b.shape()));
    auto an = a.node();
    auto bn = b.node();
    Tensor<T> out = detail::make_result<T>(a.shape(), {a, b}, nullptr);
    const int64_t total = a.numel();
    for (int64_t i = 0; i < total; ++i) out.value()[i] = an->value[i] * bn->value[i];
    if (out.requires_grad()) {
        TensorNode<T>* self = out.node().get();
        out.node()->backward_fn = [self, an, bn, total]() {
            const T* g = self->grad.data();
            if (an->requires_grad) {
                an->ensure_grad();
                for (int64_t i = 0; i < total; ++i) an->grad[i] += g[i] * bn->value[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int64_t i = 0; i < total; ++i) bn->grad[i] += g[i] * an->value[i];
            }
        };
    }
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double factor) {
    detail::check_finite_input("scale", a);
    auto an = a.node();
    Tensor<T> out = detail::make_result<T>(a.shape(), {a}, nullptr);
    const T f = static_cast<T>(factor);
    const int64_t total = a.numel();
    for (int64_t i = 0; i < total; ++i) out.value()[i] = an->value[i] * f;
    if (out.requires_grad()) {
        TensorNode<T>* self = out.node().get();
        out.node()->backward_fn = [self, an, f, total]() {
            an->ensure_grad();
            for (int64_t i = 0; i < total; ++i) an->grad[i] += self->grad[i] * f;
        };
    }
    return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    check(!parts.empty(), "concat: no inputs");
    const int rank = parts[0].rank();
    check(axis >= 0 && axis < rank, "concat: axis ", axis, " out of range for rank ", rank);
    std::vector<int> out_shape = parts[0].shape();
    out_shape[static_cast<size_t>(axis)] = 0;
    for (const auto& p : parts) {
        detail::check_finite_input("concat", p);
        check(p.rank() == rank, "concat: rank mismatch");
        for (int d = 0; d < rank; ++d) {
            if (d == axis) continue;
            check(p.dim(d) == parts[0].dim(d), "concat: dim ", d, " mismatch, ",
                  shape_str(p.shape()), " vs ", shape_str(parts[0].shape()));
        }
        out_shape[static_cast<size_t>(axis)] += p.dim(axis);
    }
    int64_t outer = 1;
    for (int d = 0; d < axis; ++d) outer *= out_shape[static_cast<size_t>(d)];
    int64_t inner = 1;
    for (int d = axis + 1; d < rank; ++d) inner *= out_shape[static_cast<size_t>(d)];
    const int64_t out_block = out_shape[static_cast<size_t>(axis)] * inner;

    Tensor<T> out = detail::make_result<T>(out_shape, parts, nullptr);
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;
    std::vector<int64_t> blocks, prefixes;
    int64_t prefix = 0;
    for (const auto& p : parts) {
        nodes.push_back(p.node());
        blocks.push_back(p.dim(axis) * inner);
        prefixes.push_back(prefix);
        prefix += blocks.back();
    }
    T* o = out.value().data();
    for (size_t pi = 0; pi < nodes.size(); ++pi) {
        const T* src = nodes[pi]->value.data();
        for (int64_t r = 0; r < outer; ++r) {
            std::copy(src + r * blocks[pi], src + (r + 1) * blocks[pi],
                      o + r * out_block + prefixes[pi]);
        }
    }
    if (out.requires_grad()) {
        TensorNode<T>* self = out.node().get();
        out.node()->backward_fn = [self, nodes, blocks, prefixes, outer, out_block]() {
            const T* g = self->grad.data();
            for (size_t pi = 0; pi < nodes.size(); ++pi) {
                if (!nodes[pi]->requires_grad) continue;
                nodes[pi]->ensure_grad();
                T* dst = nodes[pi]->grad.data();
                for (int64_t r = 0; r < outer; ++r) {
                    const T* srow = g + r * out_block + prefixes[pi];
                    T* drow = dst + r * blocks[pi];
                    for (int64_t j = 0; j < blocks[pi]; ++j) drow[j] += srow[j];
                }
            }
        };
    }
    return out;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, const std::vector<int>& offsets,
                const std::vector<int>& sizes) {
    detail::check_finite_input("slice", a);
    const int rank = a.rank();
    check(static_cast<int>(offsets.size()) == rank && static_cast<int>(sizes.size()) == rank,
          "slice: offsets/sizes rank mismatch for ", shape_str(a.shape()));
    for (int d = 0; d < rank; ++d) {
        check(offsets[static_cast<size_t>(d)] >= 0 && sizes[static_cast<size_t>(d)] > 0 &&
                  offsets[static_cast<size_t>(d)] + sizes[static_cast<size_t>(d)] <= a.dim(d),
              "slice: dim ", d, " window [", offsets[static_cast<size_t>(d)], ", +",
              sizes[static_cast<size_t>(d)], ") exceeds ", shape_str(a.shape()));
    }
    std::vector<int64_t> in_strides(static_cast<size_t>(rank), 1);
    for (int d = rank - 2; d >= 0; --d) {
        in_strides[static_cast<size_t>(d)] =
            in_strides[static_cast<size_t>(d + 1)] * a.dim(d + 1);
    }
    auto an = a.node();
    Tensor<T> out = detail::make_result<T>(sizes, {a}, nullptr);
    // Iterate output rows (all dims but the last); each row is contiguous.
    int64_t rows = 1;
    for (int d = 0; d < rank - 1; ++d) rows *= sizes[static_cast<size_t>(d)];
    const int row_len = sizes[static_cast<size_t>(rank - 1)];
    std::vector<int64_t> row_src(static_cast<size_t>(rows));
    {
        std::vector<int> idx(static_cast<size_t>(rank > 0 ? rank - 1 : 0), 0);
        for (int64_t r = 0; r < rows; ++r) {
            int64_t base = offsets[static_cast<size_t>(rank - 1)];
            for (int d = 0; d < rank - 1; ++d) {
                base += (offsets[static_cast<size_t>(d)] + idx[static_cast<size_t>(d)]) *
                        in_strides[static_cast<size_t>(d)];
            }
            row_src[static_cast<size_t>(r)] = base;
            for (int d = rank - 2; d >= 0; --d) {
                if (++idx[static_cast<size_t>(d)] < sizes[static_cast<size_t>(d)]) break;
                idx[static_cast<size_t>(d)] = 0;
            }
        }
    }
    T* o = out.value().data();
    const T* src = an->value.data();
    for (int64_t r = 0; r < rows; ++r) {
        std::copy(src + row_src[static_cast<size_t>(r)],
                  src + row_src[static_cast<size_t>(r)] + row_len, o + r * row_len);
    }
    if (out.requires_grad()) {
        TensorNode<T>* self = out.node().get();
        out.node()->backward_fn = [self, an, row_src, rows, row_len]() {
            an->ensure_grad();
            const T* g = self->grad.data();
            T* da = an->grad.data();
            for (int64_t r = 0; r < rows; ++r) {
                T* drow = da + row_src[static_cast<size_t>(r)];
                const T* grow = g + r * row_len;
                for (int j = 0; j < row_len; ++j) drow[j] += grow[j];
            }
        };
    }
    return out;
}

template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, const std::vector<int>& ids) {
    detail::check_finite_input("embedding_lookup", table);
    check(table.rank() == 2, "embedding_lookup: table must be rank-2, got ",
          shape_str(table.shape()));
    const int v = table.dim(0);
    const int d = table.dim(1);
    const int n = static_cast<int>(ids.size());
    check(n > 0, "embedding_lookup: empty id list");
    for (int id : ids) {
        check(id >= 0 && id < v, "embedding_lookup: id ", id, " out of range [0, ", v, ")");
    }
    auto tn = table.node();
    Tensor<T> out = detail::make_result<T>({n, d}, {table}, nullptr);
    for (int i = 0; i < n; ++i) {
        const T* row = tn->value.data() + static_cast<int64_t>(ids[static_cast<size_t>(i)]) * d;
        std::copy(row, row + d, out.value().data() + static_cast<int64_t>(i) * d);
    }
    if (out.requires_grad()) {
        TensorNode<T>* self = out.node().get();
        auto ids_copy = ids;
        out.node()->backward_fn = [self, tn, ids_copy, n, d]() {
            tn->ensure_grad();
            const T* g = self->grad.data();
            for (int i = 0; i < n; ++i) {
                T* drow =
                    tn->grad.data() + static_cast<int64_t>(ids_copy[static_cast<size_t>(i)]) * d;
                const T* grow = g + static_cast<int64_t>(i) * d;
                for (int j = 0; j < d; ++j) drow[j] += grow[j];
            }
        };
    }
    return out;
}

// softmax over the last dim. mask (optional) has one byte per element; rows
// that are fully masked produce all-zero output.
template <typename T>
Tensor<T> softmax(const Tensor<T>& a,
                  std::shared_ptr<const std::vector<uint8_t>> mask = nullptr) {
    detail::check_finite_input("softmax", a);
    const int n = a.shape().back();
    const int64_t rows = a.numel() / n;
    if (mask) {
        check(static_cast<int64_t>(mask->size()) == a.numel(), "softmax: mask size ",
              mask->size(), " does not match ", shape_str(a.shape()));
    }
    auto an = a.node();
    Tensor<T> out = detail::make_result<T>(a.shape(), {a}, nullptr);
    for (int64_t r = 0; r < rows; ++r) {
        kernels::softmax_row(an->value.data() + r * n, mask ? mask->data() + r * n : nullptr,
                             out.value().data() + r * n, n);
    }
    if (out.requires_grad()) {
        TensorNode<T>* self = out.node().get();
        out.node()->backward_fn = [self, an, rows, n]() {
            an->ensure_grad();
            for (int64_t r = 0; r < rows; ++r) {
                const T* y = self->value.data() + r * n;
                const T* gy = self->grad.data() + r * n;
                T* dx = an->grad.data() + r * n;
                T s = 0;
                for (int j = 0; j < n; ++j) s += y[j] * gy[j];
                for (int j = 0; j < n; ++j) dx[j] += y[j] * (gy[j] - s);
            }
        };
    }
    return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps = 1e-5) {
    detail::check_finite_input("layer_norm", x);
    detail::check_finite_input("layer_norm", gamma);
    detail::check_finite_input("layer_norm", beta);
    const int n = x.shape().back();
    check(gamma.rank() == 1 && gamma.dim(0) == n && beta.rank() == 1 && beta.dim(0) == n,
          "layer_norm: gamma/beta must be rank-1 of size ", n, ", got ", shape_str(gamma.shape()),
          " and ", shape_str(beta.shape()));
    const int64_t rows = x.numel() / n;
    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    Tensor<T> out = detail::make_result<T>(x.shape(), {x, gamma, beta}, nullptr);
    auto xhat = std::make_shared<std::vector<T>>(static_cast<size_t>(x.numel()));
    auto rstd = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        T mean_v, rstd_v;
        kernels::layer_norm_row(xn->value.data() + r * n, gn->value.data(), bn->value.data(),
                                xhat->data() + r * n, out.value().data() + r * n, n,
                                static_cast<T>(eps), &mean_v, &rstd_v);
        (*rstd)[static_cast<size_t>(r)] = rstd_v;
    }
    if (out.requires_grad()) {
        TensorNode<T>* self = out.node().get();
        out.node()->backward_fn = [self, xn, gn, bn, xhat, rstd, rows, n]() {
            const T inv_n = T(1) / static_cast<T>(n);
            for (int64_t r = 0; r < rows; ++r) {
                const T* gy = self->grad.data() + r * n;
                const T* xh = xhat->data() + r * n;
                if (gn->requires_grad) {
                    gn->ensure_grad();
                    for (int j = 0; j < n; ++j) gn->grad[static_cast<size_t>(j)] += gy[j] * xh[j];
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    for (int j = 0; j < n; ++j) bn->grad[static_cast<size_t>(j)] += gy[j];
                }
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    T* dx = xn->grad.data() + r * n;
                    const T rs = (*rstd)[static_cast<size_t>(r)];
                    T sum_d = 0, sum_dx = 0;
                    for (int j = 0; j < n; ++j) {
                        const T dyh = gy[j] * gn->value[static_cast<size_t>(j)];
                        sum_d += dyh;
                        sum_dx += dyh * xh[j];
                    }
                    sum_d *= inv_n;
                    sum_dx *= inv_n;
                    for (int j = 0; j < n; ++j) {
                        const T dyh = gy[j] * gn->value[static_cast<size_t>(j)];
                        dx[j] += rs * (dyh - sum_d - xh[j] * sum_dx);
                    }
                }
            }
        };
    }
    return out;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    detail::check_finite_input("gelu", x);
    auto xn = x.node();
    Tensor<T> out = detail::make_result<T>(x.shape(), {x}, nullptr);
    const int64_t total = x.numel();
    for (int64_t i = 0; i < total; ++i) out.value()[i] = kernels::gelu(xn->value[i]);
    if (out.requires_grad()) {
        TensorNode<T>* self = out.node().get();
        out.node()->backward_fn = [self, xn, total]() {
            xn->ensure_grad();
            for (int64_t i = 0; i < total; ++i) {
                xn->grad[static_cast<size_t>(i)] +=
                    self->grad[static_cast<size_t>(i)] * kernels::gelu_grad(xn->value[static_cast<size_t>(i)]);
            }
        };
    }
    return out;
}

// conv2d on a single image: x (ci,h,w), w (co,ci,kh,kw), b (co).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                 int pad) {
    detail::check_finite_input("conv2d", x);
    detail::check_finite_input("conv2d", w);
    detail::check_finite_input("conv2d", b);
    check(x.rank() == 3 && w.rank() == 4 && b.rank() == 1, "conv2d: expects x rank-3 ",
          shape_str(x.shape()), ", w rank-4 ", shape_str(w.shape()), ", b rank-1 ",
          shape_str(b.shape()));
    const int ci = x.dim(0), h = x.dim(1), win = x.dim(2);
    const int co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    check(w.dim(1) == ci, "conv2d: weight in-channels ", w.dim(1), " vs input channels ", ci);
    check(b.dim(0) == co, "conv2d: bias size ", b.dim(0), " vs out-channels ", co);
    const int oh = kernels::conv_out_dim(h, kh, stride, pad);
    const int ow = kernels::conv_out_dim(win, kw, stride, pad);
    check(oh > 0 && ow > 0, "conv2d: output would be empty for input ", shape_str(x.shape()));
    auto xn = x.node();
    auto wn = w.node();
    auto bn = b.node();
    Tensor<T> out = detail::make_result<T>({co, oh, ow}, {x, w, b}, nullptr);
    kernels::conv2d_forward(xn->value.data(), wn->value.data(), bn->value.data(),
                            out.value().data(), ci, h, win, co, kh, kw, stride, pad);
    if (out.requires_grad()) {
        TensorNode<T>* self = out.node().get();
        out.node()->backward_fn = [self, xn, wn, bn, ci, h, win, co, kh, kw, stride, pad]() {
            T* dx = nullptr;
            T* dw = nullptr;
            T* db = nullptr;
            if (xn->requires_grad) {
                xn->ensure_grad();
                dx = xn->grad.data();
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
                dw = wn->grad.data();
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                db = bn->grad.data();
            }
            kernels::conv2d_backward(xn->value.data(), wn->value.data(), self->grad.data(), dx,
                                     dw, db, ci, h, win, co, kh, kw, stride, pad);
        };
    }
    return out;
}

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, int kernel, int stride) {
    detail::check_finite_input("avg_pool2d", x);
    check(x.rank() == 3, "avg_pool2d: expects rank-3 input, got ", shape_str(x.shape()));
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int oh = kernels::conv_out_dim(h, kernel, stride, 0);
    const int ow = kernels::conv_out_dim(w, kernel, stride, 0);
    check(oh > 0 && ow > 0, "avg_pool2d: output would be empty for ", shape_str(x.shape()));
    auto xn = x.node();
    Tensor<T> out = detail::make_result<T>({c, oh, ow}, {x}, nullptr);
    kernels::avg_pool2d_forward(xn->value.data(), out.value().data(), c, h, w, kernel, stride);
    if (out.requires_grad()) {
        TensorNode<T>* self = out.node().get();
        out.node()->backward_fn = [self, xn, c, h, w, kernel, stride]() {
            xn->ensure_grad();
            kernels::avg_pool2d_backward(self->grad.data(), xn->grad.data(), c, h, w, kernel,
                                         stride);
        };
    }
    return out;
}

// linear: x (rows,in) * w (out,in)^T + b (out). b may be undefined for none.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    detail::check_finite_input("linear", x);
    detail::check_finite_input("linear", w);
    check(x.rank() == 2 && w.rank() == 2, "linear: expects rank-2 x and w, got ",
          shape_str(x.shape()), " and ", shape_str(w.shape()));
    check(x.dim(1) == w.dim(1), "linear: in-features mismatch, x ", shape_str(x.shape()), " vs w ",
          shape_str(w.shape()));
    const int rows = x.dim(0), in = x.dim(1), outf = w.dim(0);
    const bool has_bias = b.defined();
    if (has_bias) {
        detail::check_finite_input("linear", b);
        check(b.rank() == 1 && b.dim(0) == outf, "linear: bias ", shape_str(b.shape()),
              " vs out-features ", outf);
    }
    std::vector<Tensor<T>> inputs = {x, w};
    if (has_bias) inputs.push_back(b);
    auto xn = x.node();
    auto wn = w.node();
    auto bn = has_bias ? b.node() : nullptr;
    Tensor<T> out = detail::make_result<T>({rows, outf}, inputs, nullptr);
    kernels::matmul(xn->value.data(), wn->value.data(), out.value().data(), rows, in, outf, false,
                    true, false);
    if (has_bias) {
        T* o = out.value().data();
        const T* bv = bn->value.data();
        for (int r = 0; r < rows; ++r) {
            for (int j = 0; j < outf; ++j) o[static_cast<int64_t>(r) * outf + j] += bv[j];
        }
    }
    if (out.requires_grad()) {
        TensorNode<T>* self = out.node().get();
        out.node()->backward_fn = [self, xn, wn, bn, rows, in, outf]() {
            const T* g = self->grad.data();
            if (xn->requires_grad) {
                xn->ensure_grad();
                kernels::matmul(g, wn->value.data(), xn->grad.data(), rows, outf, in, false, false,
                                true);
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
                kernels::matmul(g, xn->value.data(), wn->grad.data(), outf, rows, in, true, false,
                                true);
            }
            if (bn && bn->requires_grad) {
                bn->ensure_grad();
                T* db = bn->grad.data();
                for (int r = 0; r < rows; ++r) {
                    for (int j = 0; j < outf; ++j) db[j] += g[static_cast<int64_t>(r) * outf + j];
                }
            }
        };
    }
    return out;
}

// Mean negative log-likelihood over rows where mask is nonzero (all rows when
// the mask is absent). logits: (rows,V); targets: one id per row.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets,
                        std::shared_ptr<const std::vector<uint8_t>> mask = nullptr) {
    detail::check_finite_input("cross_entropy", logits);
    check(logits.rank() == 2 || logits.rank() == 1, "cross_entropy: expects rank-1/2 logits, got ",
          shape_str(logits.shape()));
    const int v = logits.shape().back();
    const int64_t rows = logits.numel() / v;
    check(static_cast<int64_t>(targets.size()) == rows, "cross_entropy: ", targets.size(),
          " targets for ", rows, " rows");
    if (mask) {
        check(static_cast<int64_t>(mask->size()) == rows, "cross_entropy: mask size ",
              mask->size(), " vs ", rows, " rows");
    }
    int64_t active = 0;
    for (int64_t r = 0; r < rows; ++r) {
        if (!mask || (*mask)[static_cast<size_t>(r)]) {
            const int t = targets[static_cast<size_t>(r)];
            check(t >= 0 && t < v, "cross_entropy: target ", t, " out of range [0, ", v, ")");
            ++active;
        }
    }
    check(active > 0, "cross_entropy: no unmasked rows");
    auto ln = logits.node();
    Tensor<T> out = detail::make_result<T>({1}, {logits}, nullptr);
    auto probs = std::make_shared<std::vector<T>>(static_cast<size_t>(logits.numel()));
    T loss = 0;
    for (int64_t r = 0; r < rows; ++r) {
        if (mask && !(*mask)[static_cast<size_t>(r)]) continue;
        T* p = probs->data() + r * v;
        kernels::softmax_row(ln->value.data() + r * v, static_cast<const uint8_t*>(nullptr), p, v);
        const T pt = p[targets[static_cast<size_t>(r)]];
        loss -= std::log(pt > T(1e-30) ? pt : T(1e-30));
    }
    out.value()[0] = loss / static_cast<T>(active);
    if (out.requires_grad()) {
        TensorNode<T>* self = out.node().get();
        auto targets_copy = targets;
        out.node()->backward_fn = [self, ln, probs, targets_copy, mask, rows, v, active]() {
            ln->ensure_grad();
            const T gscale = self->grad[0] / static_cast<T>(active);
            for (int64_t r = 0; r < rows; ++r) {
                if (mask && !(*mask)[static_cast<size_t>(r)]) continue;
                const T* p = probs->data() + r * v;
                T* d = ln->grad.data() + r * v;
                for (int j = 0; j < v; ++j) d[j] += gscale * p[j];
                d[targets_copy[static_cast<size_t>(r)]] -= gscale;
            }
        };
    }
    return out;
}

// Scalar readout sum_i x_i * weights_i with constant weights. Not part of
// OpKind: exists so tests can reduce arbitrary op outputs to a scalar loss.
template <typename T>
Tensor<T> reduce_weighted_sum(const Tensor<T>& x, std::vector<T> weights) {
    detail::check_finite_input("reduce_weighted_sum", x);
    check(static_cast<int64_t>(weights.size()) == x.numel(), "reduce_weighted_sum: ",
          weights.size(), " weights for ", x.numel(), " elements");
    auto xn = x.node();
    Tensor<T> out = detail::make_result<T>({1}, {x}, nullptr);
    T s = 0;
    for (int64_t i = 0; i < x.numel(); ++i) s += xn->value[static_cast<size_t>(i)] * weights[static_cast<size_t>(i)];
    out.value()[0] = s;
    if (out.requires_grad()) {
        TensorNode<T>* self = out.node().get();
        auto w = std::make_shared<std::vector<T>>(std::move(weights));
        out.node()->backward_fn = [self, xn, w]() {
            xn->ensure_grad();
            const T g = self->grad[0];
            for (size_t i = 0; i < w->size(); ++i) xn->grad[i] += g * (*w)[i];
        };
    }
    return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    return reduce_weighted_sum(x, std::vector<T>(static_cast<size_t>(x.numel()), T(1)));
}

// Layout-preserving reinterpretation of the shape. Pure metadata (identity
// values, pass-through gradient), so it is not an OpKind.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<int> new_shape) {
    int64_t n = 1;
    for (int d : new_shape) n *= d;
    check(n == x.numel(), "reshape: ", shape_str(x.shape()), " cannot become ",
          shape_str(new_shape));
    auto xn = x.node();
    Tensor<T> out = detail::make_result<T>(std::move(new_shape), {x}, nullptr);
    out.value() = xn->value;
    if (out.requires_grad()) {
        TensorNode<T>* self = out.node().get();
        out.node()->backward_fn = [self, xn]() {
            xn->ensure_grad();
            for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += self->grad[i];
        };
    }
    return out;
}

// Dispatcher over the closed op set; the test harness iterates OpKind through
// this single entry point.
template <typename T>
Tensor<T> forward(OpKind kind, const std::vector<Tensor<T>>& inputs, const OpAttrs& attrs) {
    auto want = [&](size_t n) {
        check(inputs.size() == n, op_kind_name(kind), ": expected ", n, " inputs, got ",
              inputs.size());
    };
    switch (kind) {
        case OpKind::matmul:
            want(2);
            return matmul(inputs[0], inputs[1], attrs.trans_a, attrs.trans_b);
        case OpKind::add:
            want(2);
            return add(inputs[0], inputs[1]);
        case OpKind::mul:
            want(2);
            return mul(inputs[0], inputs[1]);
        case OpKind::concat:
            return concat(inputs, attrs.axis);
        case OpKind::slice:
            want(1);
            return slice(inputs[0], attrs.offsets, attrs.sizes);
        case OpKind::embedding_lookup:
            want(1);
            return embedding_lookup(inputs[0], attrs.ids);
        case OpKind::softmax:
            want(1);
            return softmax(inputs[0], attrs.mask);
        case OpKind::layer_norm:
            want(3);
            return layer_norm(inputs[0], inputs[1], inputs[2], attrs.eps);
        case OpKind::gelu:
            want(1);
            return gelu(inputs[0]);
        case OpKind::conv2d:
            want(3);
            return conv2d(inputs[0], inputs[1], inputs[2], attrs.stride, attrs.pad);
        case OpKind::avg_pool2d:
            want(1);
            return avg_pool2d(inputs[0], attrs.kernel, attrs.stride);
        case OpKind::linear:
            if (inputs.size() == 2) return linear(inputs[0], inputs[1], Tensor<T>());
            want(3);
            return linear(inputs[0], inputs[1], inputs[2]);
        case OpKind::cross_entropy:
            want(1);
            return cross_entropy(inputs[0], attrs.targets, attrs.mask);
        case OpKind::scale:
            want(1);
            return scale(inputs[0], attrs.factor);
    }
    fail("forward: unknown op kind");
}

// Reverse-mode sweep from a scalar loss. Populates grads of every
// requires_grad node reachable through the tape, then clears the tape.
template <typename T>
void backward(const Tensor<T>& loss) {
    check(loss.numel() == 1, "backward: loss must be scalar, got ", shape_str(loss.shape()));
    check(loss.requires_grad(), "backward: loss does not require grad");
    std::vector<std::shared_ptr<TensorNode<T>>> topo;
    std::unordered_set<TensorNode<T>*> visited;
    std::vector<std::pair<std::shared_ptr<TensorNode<T>>, size_t>> stack;
    stack.push_back({loss.node(), 0});
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            auto parent = node->parents[next++];
            if (parent->requires_grad && !visited.count(parent.get())) {
                visited.insert(parent.get());
                stack.push_back({parent, 0});
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }
    for (auto& node : topo) node->ensure_grad();
    loss.node()->grad[0] = T(1);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn();
        (*it)->backward_fn = nullptr;
        (*it)->parents.clear();
    }
}

}  // namespace lrr
