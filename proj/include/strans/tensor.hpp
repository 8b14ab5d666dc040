#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>

#include "strans/common.hpp"
#include "strans/kernels.hpp"

// Dense tensor with reverse-mode autodiff. The design constraint that shapes
// everything here: every primitive's backward rule is itself expressed in
// primitives, so gradients are ordinary graph tensors and second-order
// gradients (gradient penalties) come out exact rather than approximated.

namespace strans {

namespace detail {
inline thread_local int no_grad_depth = 0;
inline thread_local bool finite_checks = true;
}  // namespace detail

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

struct NoGradGuard {
    NoGradGuard() { ++detail::no_grad_depth; }
    ~NoGradGuard() { --detail::no_grad_depth; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool finite_checks_enabled() { return detail::finite_checks; }
inline void set_finite_checks(bool on) { detail::finite_checks = on; }

/// Scoped toggle for the per-op finite scans; they cost as much as the math
/// on hot paths, so tight loops turn them off and check their own results.
class FiniteCheckGuard {
public:
    explicit FiniteCheckGuard(bool on) : prev_(finite_checks_enabled()) {
        set_finite_checks(on);
    }
    ~FiniteCheckGuard() { set_finite_checks(prev_); }
    FiniteCheckGuard(const FiniteCheckGuard&) = delete;
    FiniteCheckGuard& operator=(const FiniteCheckGuard&) = delete;

private:
    bool prev_;
};

template <class T>
class Tensor;

template <class T>
struct TensorNode {
    Shape shape;
    std::vector<T> val;
    std::vector<T> grad_buf;  // leaf gradient accumulator
    bool requires_grad = false;
    bool tape_consumed = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    std::function<std::vector<Tensor<T>>(const Tensor<T>&)> vjp;
};

template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T init = T(0))
        : node_(std::make_shared<TensorNode<T>>()) {
        for (index_t d : shape) ST_CHECK(d > 0, "extent must be positive, got " << shape_str(shape));
        node_->shape = std::move(shape);
        node_->val.assign(shape_numel(node_->shape), init);
    }

    Tensor(Shape shape, std::vector<T> data)
        : node_(std::make_shared<TensorNode<T>>()) {
        ST_CHECK(shape_numel(shape) == static_cast<index_t>(data.size()),
                 "shape " << shape_str(shape) << " does not match data length " << data.size());
        node_->shape = std::move(shape);
        node_->val = std::move(data);
    }

    explicit Tensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}

    static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }
    static Tensor zeros(Shape s) { return Tensor(std::move(s), T(0)); }
    static Tensor ones(Shape s) { return Tensor(std::move(s), T(1)); }
    static Tensor full(Shape s, T v) { return Tensor(std::move(s), v); }

    static Tensor randn(Shape s, Rng& rng, T stddev = T(1)) {
        Tensor t(std::move(s));
        for (T& v : t.raw()) v = static_cast<T>(stddev * rng.normal());
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    index_t dim(int i) const { return node_->shape.at(i); }
    index_t numel() const { return static_cast<index_t>(node_->val.size()); }

    const std::vector<T>& values() const { return node_->val; }

    /// Direct mutable access to the value buffer. Only valid for tensors that
    /// are not an interior node of a live tape (parameters under the
    /// optimizer step, buffers being initialized).
    std::vector<T>& raw() { return node_->val; }

    T item() const {
        ST_CHECK(numel() == 1, "item() on non-scalar tensor " << shape_str(shape()));
        return node_->val[0];
    }

    T at(std::initializer_list<index_t> ix) const {
        ST_CHECK(ix.size() == node_->shape.size(), "index rank mismatch");
        index_t flat = 0;
        auto it = ix.begin();
        for (size_t d = 0; d < node_->shape.size(); ++d, ++it) {
            ST_CHECK(*it >= 0 && *it < node_->shape[d], "index out of range");
            flat = flat * node_->shape[d] + *it;
        }
        return node_->val[flat];
    }

    bool requires_grad() const { return node_->requires_grad; }

    Tensor& set_requires_grad(bool rg) {
        ST_CHECK(!node_->vjp || !rg, "cannot toggle requires_grad on an interior node");
        node_->requires_grad = rg;
        return *this;
    }

    bool on_tape() const { return static_cast<bool>(node_->vjp); }

    /// Leaf gradient accumulated by backward().
    const std::vector<T>& grad() const {
        ST_CHECK(!node_->grad_buf.empty(), "no gradient accumulated for this tensor");
        return node_->grad_buf;
    }

    bool has_grad() const { return !node_->grad_buf.empty(); }

    Tensor grad_tensor() const { return Tensor(shape(), grad()); }

    void zero_grad() { node_->grad_buf.clear(); }

    void accumulate_grad(const std::vector<T>& g) {
        ST_CHECK(static_cast<index_t>(g.size()) == numel(), "grad size mismatch");
        if (node_->grad_buf.empty()) {
            node_->grad_buf = g;
        } else {
            kernels::binary_op(kernels::Binary::Add, node_->grad_buf.data(),
                               g.data(), node_->grad_buf.data(), numel());
        }
    }

    /// Value copy with no tape attachment.
    Tensor detach() const { return Tensor(shape(), values()); }

    template <class U>
    Tensor<U> cast() const {
        std::vector<U> out(values().size());
        for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(values()[i]);
        return Tensor<U>(shape(), std::move(out));
    }

    const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

private:
    std::shared_ptr<TensorNode<T>> node_;
};

namespace detail {

template <class T>
void check_finite(const Tensor<T>& t, const char* op) {
    if (finite_checks_enabled() &&
        !kernels::all_finite(t.values().data(), t.numel()))
        throw NumericsError(std::string("non-finite values produced by op '") + op + "'");
}

template <class T, class MakeVjp>
Tensor<T> record(const char* op, Tensor<T> out,
                 std::initializer_list<Tensor<T>> inputs, MakeVjp&& make_vjp) {
    out.node()->op = op;
    bool needs = false;
    if (grad_enabled())
        for (const Tensor<T>& in : inputs) needs = needs || in.requires_grad();
    if (needs) {
        out.node()->requires_grad = true;
        for (const Tensor<T>& in : inputs) out.node()->parents.push_back(in.node());
        out.node()->vjp = make_vjp(out);
    }
    check_finite(out, op);
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> scale(const Tensor<T>& a, T s);
template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T c);
template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <class T>
Tensor<T> sum_all(const Tensor<T>& a);
template <class T>
Tensor<T> broadcast_scalar(const Tensor<T>& s, Shape shape);
template <class T>
Tensor<T> sum_last(const Tensor<T>& a);
template <class T>
Tensor<T> broadcast_last(const Tensor<T>& a, index_t cols);
template <class T>
Tensor<T> sum_leading(const Tensor<T>& a);
template <class T>
Tensor<T> broadcast_leading(const Tensor<T>& v, Shape lead);
template <class T>
Tensor<T> softmax_last(const Tensor<T>& a);

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    ST_CHECK(a.shape() == b.shape(), "add shape mismatch " << shape_str(a.shape())
                                     << " vs " << shape_str(b.shape()));
    Tensor<T> out(a.shape());
    kernels::binary_op(kernels::Binary::Add, a.values().data(), b.values().data(),
                       out.raw().data(), out.numel());
    return detail::record("add", std::move(out), {a, b}, [](auto&) {
        return [](const Tensor<T>& g) { return std::vector<Tensor<T>>{g, g}; };
    });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    ST_CHECK(a.shape() == b.shape(), "sub shape mismatch " << shape_str(a.shape())
                                     << " vs " << shape_str(b.shape()));
    Tensor<T> out(a.shape());
    kernels::binary_op(kernels::Binary::Sub, a.values().data(), b.values().data(),
                       out.raw().data(), out.numel());
    return detail::record("sub", std::move(out), {a, b}, [](auto&) {
        return [](const Tensor<T>& g) {
            return std::vector<Tensor<T>>{g, scale(g, T(-1))};
        };
    });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    ST_CHECK(a.shape() == b.shape(), "mul shape mismatch " << shape_str(a.shape())
                                     << " vs " << shape_str(b.shape()));
    Tensor<T> out(a.shape());
    kernels::binary_op(kernels::Binary::Mul, a.values().data(), b.values().data(),
                       out.raw().data(), out.numel());
    return detail::record("mul", std::move(out), {a, b}, [a, b](auto&) {
        return [a, b](const Tensor<T>& g) {
            return std::vector<Tensor<T>>{mul(g, b), mul(g, a)};
        };
    });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    Tensor<T> out(a.shape());
    kernels::axpb(a.values().data(), out.raw().data(), a.numel(), s, T(0));
    return detail::record("scale", std::move(out), {a}, [s](auto&) {
        return [s](const Tensor<T>& g) {
            return std::vector<Tensor<T>>{scale(g, s)};
        };
    });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
    Tensor<T> out(a.shape());
    kernels::axpb(a.values().data(), out.raw().data(), a.numel(), T(1), c);
    return detail::record("add_scalar", std::move(out), {a}, [](auto&) {
        return [](const Tensor<T>& g) { return std::vector<Tensor<T>>{g}; };
    });
}

template <class T>
Tensor<T> neg(const Tensor<T>& a) { return scale(a, T(-1)); }

/// Contraction over the shared inner dimension. Accepts [m,k]x[k,n],
/// batched [g,m,k]x[g,k,n], and [g,m,k]x[k,n] with the right operand shared
/// across the batch.
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    const int ra = a.ndim(), rb = b.ndim();
    ST_CHECK((ra == 2 && rb == 2) || (ra == 3 && rb == 3) || (ra == 3 && rb == 2),
             "matmul rank combination unsupported: " << shape_str(a.shape())
             << " x " << shape_str(b.shape()));
    const index_t g = ra == 3 ? a.dim(0) : 1;
    const index_t m = a.dim(ra - 2), k = a.dim(ra - 1);
    const bool b_shared = rb == 2;
    ST_CHECK(b.dim(rb - 2) == k, "matmul inner dims disagree: " << shape_str(a.shape())
             << " x " << shape_str(b.shape()));
    if (!b_shared && ra == 3)
        ST_CHECK(b.dim(0) == g, "matmul batch dims disagree");
    const index_t n = b.dim(rb - 1);

    Shape out_shape = ra == 3 ? Shape{g, m, n} : Shape{m, n};
    Tensor<T> out(std::move(out_shape));
    kernels::matmul(a.values().data(), b.values().data(), out.raw().data(), g, m,
                    k, n, b_shared);
    return detail::record("matmul", std::move(out), {a, b}, [a, b](auto&) {
        return [a, b](const Tensor<T>& g_out) {
            Tensor<T> ga = matmul(g_out, transpose2(b));
            Tensor<T> gb;
            if (a.ndim() == 3 && b.ndim() == 2) {
                // grad of the shared operand sums over the batch
                const index_t rows = a.dim(0) * a.dim(1);
                Tensor<T> a2 = reshape(a, {rows, a.dim(2)});
                Tensor<T> g2 = reshape(g_out, {rows, g_out.dim(2)});
                gb = matmul(transpose2(a2), g2);
            } else {
                gb = matmul(transpose2(a), g_out);
            }
            return std::vector<Tensor<T>>{std::move(ga), std::move(gb)};
        };
    });
}

/// Swaps the last two axes.
template <class T>
Tensor<T> transpose2(const Tensor<T>& a) {
    ST_CHECK(a.ndim() >= 2, "transpose2 needs rank >= 2");
    Shape s = a.shape();
    std::swap(s[s.size() - 1], s[s.size() - 2]);
    const index_t m = a.dim(a.ndim() - 2), n = a.dim(a.ndim() - 1);
    const index_t g = a.numel() / (m * n);
    Tensor<T> out(std::move(s));
    kernels::transpose2(a.values().data(), out.raw().data(), g, m, n);
    return detail::record("transpose2", std::move(out), {a}, [](auto&) {
        return [](const Tensor<T>& g_out) {
            return std::vector<Tensor<T>>{transpose2(g_out)};
        };
    });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    ST_CHECK(shape_numel(shape) == a.numel(), "reshape to " << shape_str(shape)
             << " changes element count of " << shape_str(a.shape()));
    Tensor<T> out(shape, a.values());
    Shape orig = a.shape();
    return detail::record("reshape", std::move(out), {a}, [orig](auto&) {
        return [orig](const Tensor<T>& g) {
            return std::vector<Tensor<T>>{reshape(g, orig)};
        };
    });
}

template <class T>
Tensor<T> gather(const Tensor<T>& a, std::shared_ptr<const kernels::IndexMap> map,
                 Shape out_shape) {
    ST_CHECK(map->src_numel == a.numel(), "gather source size mismatch");
    ST_CHECK(shape_numel(out_shape) == static_cast<index_t>(map->idx.size()),
             "gather output size mismatch");
    Tensor<T> out(std::move(out_shape));
    kernels::gather(a.values().data(), map->idx.data(), out.raw().data(),
                    out.numel());
    Shape src_shape = a.shape();
    return detail::record("gather", std::move(out), {a}, [map, src_shape](auto&) {
        return [map, src_shape](const Tensor<T>& g) {
            return std::vector<Tensor<T>>{scatter_add(g, map, src_shape)};
        };
    });
}

/// Adjoint of gather: out[j] = sum of a at positions i with map->idx[i] == j.
template <class T>
Tensor<T> scatter_add(const Tensor<T>& a,
                      std::shared_ptr<const kernels::IndexMap> map,
                      Shape out_shape) {
    ST_CHECK(static_cast<index_t>(map->idx.size()) == a.numel(),
             "scatter source size mismatch");
    ST_CHECK(shape_numel(out_shape) == map->src_numel, "scatter output size mismatch");
    Tensor<T> out(std::move(out_shape));
    kernels::scatter_add(a.values().data(), map->adjoint(), out.raw().data(),
                         out.numel());
    Shape in_shape = a.shape();
    return detail::record("scatter_add", std::move(out), {a}, [map, in_shape](auto&) {
        return [map, in_shape](const Tensor<T>& g) {
            return std::vector<Tensor<T>>{gather(g, map, in_shape)};
        };
    });
}

template <class T>
Tensor<T> interp_gather(const Tensor<T>& a,
                        std::shared_ptr<const kernels::InterpMap> map,
                        Shape out_shape) {
    ST_CHECK(map->src_numel == a.numel(), "interp source size mismatch");
    ST_CHECK(shape_numel(out_shape) == map->out_numel, "interp output size mismatch");
    Tensor<T> out(std::move(out_shape));
    kernels::interp_gather(a.values().data(), *map, out.raw().data());
    Shape src_shape = a.shape();
    return detail::record("interp_gather", std::move(out), {a},
                          [map, src_shape](auto&) {
        return [map, src_shape](const Tensor<T>& g) {
            return std::vector<Tensor<T>>{interp_scatter(g, map, src_shape)};
        };
    });
}

template <class T>
Tensor<T> interp_scatter(const Tensor<T>& a,
                         std::shared_ptr<const kernels::InterpMap> map,
                         Shape out_shape) {
    ST_CHECK(map->out_numel == a.numel(), "interp_scatter source size mismatch");
    ST_CHECK(shape_numel(out_shape) == map->src_numel,
             "interp_scatter output size mismatch");
    Tensor<T> out(std::move(out_shape));
    kernels::interp_scatter(a.values().data(), *map, out.raw().data());
    Shape in_shape = a.shape();
    return detail::record("interp_scatter", std::move(out), {a},
                          [map, in_shape](auto&) {
        return [map, in_shape](const Tensor<T>& g) {
            return std::vector<Tensor<T>>{interp_gather(g, map, in_shape)};
        };
    });
}

template <class T>
Tensor<T> sum_all(const Tensor<T>& a) {
    Tensor<T> out = Tensor<T>::scalar(kernels::sum_all(a.values().data(), a.numel()));
    Shape src = a.shape();
    return detail::record("sum_all", std::move(out), {a}, [src](auto&) {
        return [src](const Tensor<T>& g) {
            return std::vector<Tensor<T>>{broadcast_scalar(g, src)};
        };
    });
}

template <class T>
Tensor<T> broadcast_scalar(const Tensor<T>& s, Shape shape) {
    ST_CHECK(s.numel() == 1, "broadcast_scalar needs a scalar");
    Tensor<T> out(shape, s.values()[0]);
    return detail::record("broadcast_scalar", std::move(out), {s}, [](auto&) {
        return [](const Tensor<T>& g) {
            return std::vector<Tensor<T>>{sum_all(g)};
        };
    });
}

/// [.., C] -> [.., 1]
template <class T>
Tensor<T> sum_last(const Tensor<T>& a) {
    ST_CHECK(a.ndim() >= 1, "sum_last needs rank >= 1");
    const index_t cols = a.dim(a.ndim() - 1);
    const index_t rows = a.numel() / cols;
    Shape s = a.shape();
    s.back() = 1;
    Tensor<T> out(std::move(s));
    kernels::sum_last(a.values().data(), rows, cols, out.raw().data());
    return detail::record("sum_last", std::move(out), {a}, [cols](auto&) {
        return [cols](const Tensor<T>& g) {
            return std::vector<Tensor<T>>{broadcast_last(g, cols)};
        };
    });
}

/// [.., 1] -> [.., C]
template <class T>
Tensor<T> broadcast_last(const Tensor<T>& a, index_t cols) {
    ST_CHECK(a.ndim() >= 1 && a.dim(a.ndim() - 1) == 1,
             "broadcast_last needs trailing extent 1");
    Shape s = a.shape();
    s.back() = cols;
    Tensor<T> out(std::move(s));
    kernels::bcast_last(a.values().data(), a.numel(), cols, out.raw().data());
    return detail::record("broadcast_last", std::move(out), {a}, [](auto&) {
        return [](const Tensor<T>& g) {
            return std::vector<Tensor<T>>{sum_last(g)};
        };
    });
}

/// [d0, .., dk, C] -> [C]
template <class T>
Tensor<T> sum_leading(const Tensor<T>& a) {
    ST_CHECK(a.ndim() >= 2, "sum_leading needs rank >= 2");
    const index_t cols = a.dim(a.ndim() - 1);
    const index_t rows = a.numel() / cols;
    Tensor<T> out(Shape{cols});
    kernels::sum_leading(a.values().data(), rows, cols, out.raw().data());
    Shape lead(a.shape().begin(), a.shape().end() - 1);
    return detail::record("sum_leading", std::move(out), {a}, [lead](auto&) {
        return [lead](const Tensor<T>& g) {
            return std::vector<Tensor<T>>{broadcast_leading(g, lead)};
        };
    });
}

/// [C] -> [lead.., C]
template <class T>
Tensor<T> broadcast_leading(const Tensor<T>& v, Shape lead) {
    ST_CHECK(v.ndim() == 1, "broadcast_leading needs a vector");
    const index_t rows = shape_numel(lead);
    Shape s = lead;
    s.push_back(v.dim(0));
    Tensor<T> out(std::move(s));
    kernels::bcast_leading(v.values().data(), rows, v.dim(0), out.raw().data());
    return detail::record("broadcast_leading", std::move(out), {v}, [](auto&) {
        return [](const Tensor<T>& g) {
            return std::vector<Tensor<T>>{sum_leading(g)};
        };
    });
}

namespace detail {

template <class T, class MakeVjp>
Tensor<T> unary_impl(const char* name, kernels::Unary kind, const Tensor<T>& a,
                     T param, MakeVjp&& make_vjp) {
    Tensor<T> out(a.shape());
    kernels::unary_op(kind, a.values().data(), out.raw().data(), a.numel(), param);
    return record(name, std::move(out), {a}, std::forward<MakeVjp>(make_vjp));
}

}  // namespace detail

template <class T>
Tensor<T> exp(const Tensor<T>& a) {
    return detail::unary_impl("exp", kernels::Unary::Exp, a, T(0), [](Tensor<T>& out) {
        std::weak_ptr<TensorNode<T>> wy = out.node();
        return [wy](const Tensor<T>& g) {
            return std::vector<Tensor<T>>{mul(g, Tensor<T>(wy.lock()))};
        };
    });
}

template <class T>
Tensor<T> log(const Tensor<T>& a) {
    return detail::unary_impl("log", kernels::Unary::Log, a, T(0), [a](Tensor<T>&) {
        return [a](const Tensor<T>& g) {
            return std::vector<Tensor<T>>{mul(g, reciprocal(a))};
        };
    });
}

template <class T>
Tensor<T> sqrt(const Tensor<T>& a) {
    return detail::unary_impl("sqrt", kernels::Unary::Sqrt, a, T(0), [](Tensor<T>& out) {
        std::weak_ptr<TensorNode<T>> wy = out.node();
        return [wy](const Tensor<T>& g) {
            Tensor<T> y(wy.lock());
            return std::vector<Tensor<T>>{mul(g, scale(reciprocal(y), T(0.5)))};
        };
    });
}

template <class T>
Tensor<T> reciprocal(const Tensor<T>& a) {
    return detail::unary_impl("reciprocal", kernels::Unary::Reciprocal, a, T(0),
                              [](Tensor<T>& out) {
        std::weak_ptr<TensorNode<T>> wy = out.node();
        return [wy](const Tensor<T>& g) {
            Tensor<T> y(wy.lock());
            return std::vector<Tensor<T>>{neg(mul(g, mul(y, y)))};
        };
    });
}

template <class T>
Tensor<T> square(const Tensor<T>& a) {
    return detail::unary_impl("square", kernels::Unary::Square, a, T(0), [a](Tensor<T>&) {
        return [a](const Tensor<T>& g) {
            return std::vector<Tensor<T>>{mul(g, scale(a, T(2)))};
        };
    });
}

template <class T>
Tensor<T> erf(const Tensor<T>& a) {
    return detail::unary_impl("erf", kernels::Unary::Erf, a, T(0), [a](Tensor<T>&) {
        return [a](const Tensor<T>& g) {
            // d/dx erf(x) = 2/sqrt(pi) * exp(-x^2)
            const T c = static_cast<T>(1.1283791670955125738961589031);
            return std::vector<Tensor<T>>{mul(g, scale(exp(neg(square(a))), c))};
        };
    });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& a) {
    return detail::unary_impl("tanh", kernels::Unary::Tanh, a, T(0), [](Tensor<T>& out) {
        std::weak_ptr<TensorNode<T>> wy = out.node();
        return [wy](const Tensor<T>& g) {
            Tensor<T> y(wy.lock());
            return std::vector<Tensor<T>>{mul(g, add_scalar(neg(mul(y, y)), T(1)))};
        };
    });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    return detail::unary_impl("sigmoid", kernels::Unary::Sigmoid, a, T(0),
                              [](Tensor<T>& out) {
        std::weak_ptr<TensorNode<T>> wy = out.node();
        return [wy](const Tensor<T>& g) {
            Tensor<T> y(wy.lock());
            return std::vector<Tensor<T>>{mul(g, mul(y, add_scalar(neg(y), T(1))))};
        };
    });
}

template <class T>
Tensor<T> softplus(const Tensor<T>& a) {
    return detail::unary_impl("softplus", kernels::Unary::Softplus, a, T(0),
                              [a](Tensor<T>&) {
        return [a](const Tensor<T>& g) {
            return std::vector<Tensor<T>>{mul(g, sigmoid(a))};
        };
    });
}

/// slope applies for x < 0; the subgradient at x == 0 is the slope.
template <class T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope = T(0.2)) {
    return detail::unary_impl("leaky_relu", kernels::Unary::LeakyRelu, a, slope,
                              [a, slope](Tensor<T>&) {
        return [a, slope](const Tensor<T>& g) {
            // piecewise-constant mask, detached by construction
            Tensor<T> mask(a.shape());
            kernels::unary_op(kernels::Unary::LeakyReluMask, a.values().data(),
                              mask.raw().data(), a.numel(), slope);
            return std::vector<Tensor<T>>{mul(g, mask)};
        };
    });
}

template <class T>
Tensor<T> gelu(const Tensor<T>& a) {
    // 0.5 x (1 + erf(x / sqrt(2))), exact form
    const T inv_sqrt2 = static_cast<T>(0.70710678118654752440084436210);
    return mul(scale(a, T(0.5)), add_scalar(erf(scale(a, inv_sqrt2)), T(1)));
}

template <class T>
Tensor<T> softmax_last(const Tensor<T>& a) {
    ST_CHECK(a.ndim() >= 1, "softmax needs rank >= 1");
    const index_t cols = a.dim(a.ndim() - 1);
    const index_t rows = a.numel() / cols;
    Tensor<T> out(a.shape());
    kernels::softmax_rows(a.values().data(), out.raw().data(), rows, cols);
    return detail::record("softmax", std::move(out), {a}, [cols](Tensor<T>& o) {
        std::weak_ptr<TensorNode<T>> wy = o.node();
        return [wy, cols](const Tensor<T>& g) {
            Tensor<T> y(wy.lock());
            Tensor<T> gy = mul(g, y);
            Tensor<T> row = broadcast_last(sum_last(gy), cols);
            return std::vector<Tensor<T>>{mul(y, sub(g, row))};
        };
    });
}

template <class T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <class T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <class T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <class T>
Tensor<T> operator*(const Tensor<T>& a, T s) { return scale(a, s); }
template <class T>
Tensor<T> operator*(T s, const Tensor<T>& a) { return scale(a, s); }

// ---------------------------------------------------------------------------
// Backward engine
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
std::vector<TensorNode<T>*> topo_order(TensorNode<T>* root) {
    std::vector<TensorNode<T>*> order;
    std::unordered_set<TensorNode<T>*> visited;
    // iterative post-order DFS over parents
    std::vector<std::pair<TensorNode<T>*, size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode<T>* p = node->parents[next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;  // parents before children; reverse for backprop
}

template <class T>
std::unordered_map<TensorNode<T>*, Tensor<T>> run_backward(
    const Tensor<T>& root, const Tensor<T>& seed, bool create_graph) {
    ST_CHECK(root.numel() == 1, "backward root must be scalar, got "
                                << shape_str(root.shape()));
    ST_CHECK(!root.node()->tape_consumed, "tape already consumed by a previous backward");
    ST_CHECK(root.on_tape() || root.requires_grad(),
             "backward on a detached graph: root does not require grad");

    auto order = topo_order(root.node().get());
    std::unordered_map<TensorNode<T>*, Tensor<T>> grads;
    grads.emplace(root.node().get(), seed);

    std::unique_ptr<NoGradGuard> guard;
    if (!create_graph) guard = std::make_unique<NoGradGuard>();

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode<T>* node = *it;
        auto gi = grads.find(node);
        if (gi == grads.end() || !node->vjp) continue;
        std::vector<Tensor<T>> parent_grads = node->vjp(gi->second);
        ST_CHECK(parent_grads.size() == node->parents.size(),
                 "vjp arity mismatch in op '" << node->op << "'");
        for (size_t p = 0; p < node->parents.size(); ++p) {
            TensorNode<T>* parent = node->parents[p].get();
            if (!parent->requires_grad) continue;
            ST_CHECK(parent_grads[p].defined(),
                     "vjp of op '" << node->op << "' missing grad for parent " << p);
            auto found = grads.find(parent);
            if (found == grads.end())
                grads.emplace(parent, std::move(parent_grads[p]));
            else
                found->second = add(found->second, parent_grads[p]);
        }
    }
    return grads;
}

}  // namespace detail

/// Accumulates gradients of `loss` into the .grad() buffers of all reachable
/// leaf tensors with requires_grad, then frees the tape. A second backward
/// over the same graph is an error.
template <class T>
void backward(const Tensor<T>& loss) {
    auto grads = detail::run_backward(loss, Tensor<T>::scalar(T(1)), false);
    auto order = detail::topo_order(loss.node().get());
    for (TensorNode<T>* node : order) {
        if (!node->vjp && node->requires_grad) {
            auto gi = grads.find(node);
            if (gi != grads.end()) {
                if (finite_checks_enabled() &&
                    !kernels::all_finite(gi->second.values().data(),
                                         gi->second.numel()))
                    throw NumericsError("non-finite gradient reaching leaf");
                if (node->grad_buf.empty()) {
                    node->grad_buf = gi->second.values();
                } else {
                    kernels::binary_op(kernels::Binary::Add, node->grad_buf.data(),
                                       gi->second.values().data(),
                                       node->grad_buf.data(),
                                       static_cast<index_t>(node->grad_buf.size()));
                }
            }
        }
    }
    // free the tape; parents are cleared iteratively so graph teardown never
    // recurses deeply
    for (TensorNode<T>* node : order) {
        if (node->vjp) {
            node->vjp = nullptr;
            node->parents.clear();
            node->tape_consumed = true;
        }
    }
}

/// Gradients of a scalar w.r.t. an explicit list, returned as tensors. With
/// create_graph the returned tensors stay connected so penalties built from
/// them backpropagate exactly. The tape is left intact.
template <class T>
std::vector<Tensor<T>> gradient(const Tensor<T>& out,
                                const std::vector<Tensor<T>>& wrt,
                                bool create_graph = false) {
    auto grads = detail::run_backward(out, Tensor<T>::scalar(T(1)), create_graph);
    std::vector<Tensor<T>> result;
    result.reserve(wrt.size());
    for (const Tensor<T>& w : wrt) {
        auto gi = grads.find(w.node().get());
        result.push_back(gi != grads.end() ? gi->second
                                           : Tensor<T>::zeros(w.shape()));
    }
    return result;
}

}  // namespace strans
