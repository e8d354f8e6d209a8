#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hgt/error.hpp"
#include "hgt/rng.hpp"

namespace hgt {

// Tensor storage is 64-byte aligned so vectorized kernels see the same
// alignment on every run; heap-address-dependent reduction peeling would
// otherwise break bitwise reproducibility.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::size_t alignment = 64;

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) {}

    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(alignment)));
    }
    void deallocate(T* p, std::size_t) { ::operator delete(p, std::align_val_t(alignment)); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const {
        return true;
    }
};

template <class T>
using AlignedVec = std::vector<T, AlignedAllocator<T>>;

struct Shape {
    std::array<int64_t, 3> dim{1, 1, 1};
    int rank = 0;

    Shape() = default;
    Shape(std::initializer_list<int64_t> dims) {
        rank = static_cast<int>(dims.size());
        if (rank > 3) throw Error::config("ShapeMismatch", "tensors have at most 3 axes");
        int i = 0;
        for (int64_t d : dims) dim[i++] = d;
    }

    int64_t numel() const {
        int64_t n = 1;
        for (int i = 0; i < rank; ++i) n *= dim[i];
        return rank == 0 ? 1 : n;
    }
    int64_t rows() const { return rank > 0 ? dim[0] : 1; }
    int64_t cols() const { return rank > 1 ? dim[1] : 1; }

    bool operator==(const Shape&) const = default;

    std::string str() const {
        std::string s = "[";
        for (int i = 0; i < rank; ++i) s += (i ? "x" : "") + std::to_string(dim[i]);
        return s + "]";
    }
};

// Dense row-major tensor with an optional gradient buffer of the same shape.
template <class Real>
struct TensorT {
    Shape shape;
    AlignedVec<Real> v;
    AlignedVec<Real> g;
    bool requires_grad = false;
    std::string name;

    int64_t numel() const { return shape.numel(); }
    int64_t rows() const { return shape.rows(); }
    int64_t cols() const { return shape.cols(); }

    Real& at(int64_t i, int64_t j) { return v[i * shape.cols() + j]; }
    Real at(int64_t i, int64_t j) const { return v[i * shape.cols() + j]; }

    void ensure_grad() {
        if (g.size() != v.size()) g.assign(v.size(), Real(0));
    }
    void zero_grad() { g.assign(v.size(), Real(0)); }
};

template <class Real>
using TensorPtr = std::shared_ptr<TensorT<Real>>;

template <class Real>
TensorPtr<Real> make_tensor(Shape shape, bool requires_grad = false) {
    auto t = std::make_shared<TensorT<Real>>();
    t->shape = shape;
    t->v.assign(static_cast<size_t>(shape.numel()), Real(0));
    t->requires_grad = requires_grad;
    if (requires_grad) t->ensure_grad();
    return t;
}

template <class Real>
TensorPtr<Real> make_tensor(Shape shape, std::vector<Real> values, bool requires_grad = false) {
    if (static_cast<int64_t>(values.size()) != shape.numel())
        throw Error::config("ShapeMismatch", "value count does not match shape " + shape.str());
    auto t = std::make_shared<TensorT<Real>>();
    t->shape = shape;
    t->v.assign(values.begin(), values.end());
    t->requires_grad = requires_grad;
    if (requires_grad) t->ensure_grad();
    return t;
}

// Reverse-mode tape. Forward values are computed eagerly when an operation is
// built; each operation records the closure that propagates gradients.
// backward() replays the closures newest-first and frees the tape.
template <class Real>
class TapeT {
public:
    void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }

    void backward(const TensorPtr<Real>& loss) {
        if (loss->numel() != 1)
            throw Error::numeric("ShapeMismatch", "backward needs a scalar loss");
        loss->ensure_grad();
        loss->g[0] = Real(1);
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
        ops_.clear();
    }

    size_t size() const { return ops_.size(); }
    void clear() { ops_.clear(); }

private:
    std::vector<std::function<void()>> ops_;
};

namespace detail {

template <class Real>
using MatMap = Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class Real>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <class Real>
ConstMatMap<Real> as_mat(const TensorT<Real>& t, int64_t r, int64_t c) {
    return ConstMatMap<Real>(t.v.data(), r, c);
}
template <class Real>
MatMap<Real> grad_mat(TensorT<Real>& t, int64_t r, int64_t c) {
    return MatMap<Real>(t.g.data(), r, c);
}

template <class Real>
bool any_grad(std::initializer_list<const TensorPtr<Real>*> ts) {
    for (auto* t : ts)
        if ((*t)->requires_grad) return true;
    return false;
}

}  // namespace detail

// ---- primitive operations -------------------------------------------------

// out[i] = x[i] * W + bias. bias may be null.
template <class Real>
TensorPtr<Real> linear(TapeT<Real>& tape, const TensorPtr<Real>& x, const TensorPtr<Real>& W,
                       const TensorPtr<Real>& bias) {
    const int64_t n = x->rows(), a = x->cols();
    if (W->shape.rank != 2 || W->shape.dim[0] != a)
        throw Error::numeric("ShapeMismatch",
                             "linear: x " + x->shape.str() + " vs W " + W->shape.str());
    const int64_t b = W->shape.dim[1];
    if (bias && bias->numel() != b)
        throw Error::numeric("ShapeMismatch", "linear: bias " + bias->shape.str());

    bool grad = x->requires_grad || W->requires_grad || (bias && bias->requires_grad);
    auto out = make_tensor<Real>({n, b}, grad);
    {
        detail::MatMap<Real> o(out->v.data(), n, b);
        o.noalias() = detail::as_mat(*x, n, a) * detail::as_mat(*W, a, b);
        if (bias)
            o.rowwise() += Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>(bias->v.data(), b);
    }
    if (grad) {
        tape.record([x, W, bias, out, n, a, b]() {
            detail::ConstMatMap<Real> go(out->g.data(), n, b);
            if (x->requires_grad) {
                x->ensure_grad();
                detail::grad_mat(*x, n, a).noalias() += go * detail::as_mat(*W, a, b).transpose();
            }
            if (W->requires_grad) {
                W->ensure_grad();
                detail::grad_mat(*W, a, b).noalias() += detail::as_mat(*x, n, a).transpose() * go;
            }
            if (bias && bias->requires_grad) {
                bias->ensure_grad();
                Eigen::Map<Eigen::Matrix<Real, 1, Eigen::Dynamic>>(bias->g.data(), b) +=
                    go.colwise().sum();
            }
        });
    }
    return out;
}

template <class Real>
TensorPtr<Real> matmul(TapeT<Real>& tape, const TensorPtr<Real>& x, const TensorPtr<Real>& W) {
    return linear(tape, x, W, TensorPtr<Real>{});
}

template <class Real>
TensorPtr<Real> add(TapeT<Real>& tape, const TensorPtr<Real>& a, const TensorPtr<Real>& b) {
    if (!(a->shape == b->shape))
        throw Error::numeric("ShapeMismatch", "add: " + a->shape.str() + " vs " + b->shape.str());
    bool grad = a->requires_grad || b->requires_grad;
    auto out = make_tensor<Real>(a->shape, grad);
    for (size_t i = 0; i < out->v.size(); ++i) out->v[i] = a->v[i] + b->v[i];
    if (grad) {
        tape.record([a, b, out]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < out->g.size(); ++i) a->g[i] += out->g[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < out->g.size(); ++i) b->g[i] += out->g[i];
            }
        });
    }
    return out;
}

template <class Real>
TensorPtr<Real> scale(TapeT<Real>& tape, const TensorPtr<Real>& x, Real c) {
    auto out = make_tensor<Real>(x->shape, x->requires_grad);
    for (size_t i = 0; i < out->v.size(); ++i) out->v[i] = c * x->v[i];
    if (x->requires_grad) {
        tape.record([x, out, c]() {
            x->ensure_grad();
            for (size_t i = 0; i < out->g.size(); ++i) x->g[i] += c * out->g[i];
        });
    }
    return out;
}

// out = x * (s[0] * factor) with a trainable scalar s.
template <class Real>
TensorPtr<Real> scale_by_scalar(TapeT<Real>& tape, const TensorPtr<Real>& x,
                                const TensorPtr<Real>& s, Real factor) {
    if (s->numel() != 1) throw Error::numeric("ShapeMismatch", "scale_by_scalar needs a scalar");
    bool grad = x->requires_grad || s->requires_grad;
    auto out = make_tensor<Real>(x->shape, grad);
    const Real k = s->v[0] * factor;
    for (size_t i = 0; i < out->v.size(); ++i) out->v[i] = k * x->v[i];
    if (grad) {
        tape.record([x, s, out, factor]() {
            const Real k = s->v[0] * factor;
            if (x->requires_grad) {
                x->ensure_grad();
                for (size_t i = 0; i < out->g.size(); ++i) x->g[i] += k * out->g[i];
            }
            if (s->requires_grad) {
                s->ensure_grad();
                Real acc = 0;
                for (size_t i = 0; i < out->g.size(); ++i) acc += out->g[i] * x->v[i];
                s->g[0] += acc * factor;
            }
        });
    }
    return out;
}

template <class Real>
TensorPtr<Real> gather_rows(TapeT<Real>& tape, const TensorPtr<Real>& x,
                            std::vector<int64_t> idx) {
    const int64_t c = x->cols();
    auto out = make_tensor<Real>({static_cast<int64_t>(idx.size()), c}, x->requires_grad);
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= x->rows())
            throw Error::numeric("ShapeMismatch", "gather_rows: index out of range");
        std::copy_n(x->v.begin() + idx[i] * c, c, out->v.begin() + static_cast<int64_t>(i) * c);
    }
    if (x->requires_grad) {
        tape.record([x, out, idx = std::move(idx), c]() {
            x->ensure_grad();
            for (size_t i = 0; i < idx.size(); ++i)
                for (int64_t j = 0; j < c; ++j)
                    x->g[idx[i] * c + j] += out->g[static_cast<int64_t>(i) * c + j];
        });
    }
    return out;
}

// Copy of `base` with rows[i] written at idx[i]. Each index may appear once.
template <class Real>
TensorPtr<Real> scatter_rows_update(TapeT<Real>& tape, const TensorPtr<Real>& base,
                                    std::vector<int64_t> idx, const TensorPtr<Real>& rows) {
    const int64_t c = base->cols();
    if (rows->cols() != c || rows->rows() != static_cast<int64_t>(idx.size()))
        throw Error::numeric("ShapeMismatch", "scatter_rows_update: rows " + rows->shape.str());
    bool grad = base->requires_grad || rows->requires_grad;
    auto out = make_tensor<Real>(base->shape, grad);
    out->v = base->v;
    std::vector<char> replaced(base->rows(), 0);
    for (size_t i = 0; i < idx.size(); ++i) {
        if (replaced[idx[i]])
            throw Error::numeric("ShapeMismatch", "scatter_rows_update: duplicate index");
        replaced[idx[i]] = 1;
        std::copy_n(rows->v.begin() + static_cast<int64_t>(i) * c, c, out->v.begin() + idx[i] * c);
    }
    if (grad) {
        tape.record([base, rows, out, idx = std::move(idx), replaced = std::move(replaced), c]() {
            if (base->requires_grad) {
                base->ensure_grad();
                for (int64_t r = 0; r < base->rows(); ++r)
                    if (!replaced[r])
                        for (int64_t j = 0; j < c; ++j) base->g[r * c + j] += out->g[r * c + j];
            }
            if (rows->requires_grad) {
                rows->ensure_grad();
                for (size_t i = 0; i < idx.size(); ++i)
                    for (int64_t j = 0; j < c; ++j)
                        rows->g[static_cast<int64_t>(i) * c + j] += out->g[idx[i] * c + j];
            }
        });
    }
    return out;
}

template <class Real>
TensorPtr<Real> vcat(TapeT<Real>& tape, const std::vector<TensorPtr<Real>>& parts) {
    if (parts.empty()) throw Error::numeric("ShapeMismatch", "vcat of nothing");
    const int64_t c = parts[0]->cols();
    int64_t n = 0;
    bool grad = false;
    for (const auto& p : parts) {
        if (p->cols() != c) throw Error::numeric("ShapeMismatch", "vcat: column mismatch");
        n += p->rows();
        grad = grad || p->requires_grad;
    }
    auto out = make_tensor<Real>({n, c}, grad);
    int64_t row = 0;
    for (const auto& p : parts) {
        std::copy(p->v.begin(), p->v.end(), out->v.begin() + row * c);
        row += p->rows();
    }
    if (grad) {
        tape.record([parts, out, c]() {
            int64_t row = 0;
            for (const auto& p : parts) {
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (int64_t i = 0; i < p->rows(); ++i)
                        for (int64_t j = 0; j < c; ++j)
                            p->g[i * c + j] += out->g[(row + i) * c + j];
                }
                row += p->rows();
            }
        });
    }
    return out;
}

template <class Real>
TensorPtr<Real> hcat(TapeT<Real>& tape, const TensorPtr<Real>& a, const TensorPtr<Real>& b) {
    if (a->rows() != b->rows()) throw Error::numeric("ShapeMismatch", "hcat: row mismatch");
    const int64_t n = a->rows(), ca = a->cols(), cb = b->cols();
    bool grad = a->requires_grad || b->requires_grad;
    auto out = make_tensor<Real>({n, ca + cb}, grad);
    for (int64_t i = 0; i < n; ++i) {
        std::copy_n(a->v.begin() + i * ca, ca, out->v.begin() + i * (ca + cb));
        std::copy_n(b->v.begin() + i * cb, cb, out->v.begin() + i * (ca + cb) + ca);
    }
    if (grad) {
        tape.record([a, b, out, n, ca, cb]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < ca; ++j) a->g[i * ca + j] += out->g[i * (ca + cb) + j];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < cb; ++j)
                        b->g[i * cb + j] += out->g[i * (ca + cb) + ca + j];
            }
        });
    }
    return out;
}

namespace detail {

// tanh-approximation GELU and its derivative
template <class Real>
inline Real gelu_fwd(Real x) {
    const Real k = Real(0.7978845608028654);  // sqrt(2/pi)
    const Real inner = k * (x + Real(0.044715) * x * x * x);
    return Real(0.5) * x * (Real(1) + std::tanh(inner));
}
template <class Real>
inline Real gelu_bwd(Real x) {
    const Real k = Real(0.7978845608028654);
    const Real x3 = x * x * x;
    const Real inner = k * (x + Real(0.044715) * x3);
    const Real t = std::tanh(inner);
    const Real sech2 = Real(1) - t * t;
    return Real(0.5) * (Real(1) + t) + Real(0.5) * x * sech2 * k * (Real(1) + Real(0.134145) * x * x);
}

}  // namespace detail

enum class Activation { gelu, relu, identity };

Activation activation_from_name(const std::string& name);
std::string activation_name(Activation a);

template <class Real>
TensorPtr<Real> activate(TapeT<Real>& tape, const TensorPtr<Real>& x, Activation act) {
    if (act == Activation::identity) return x;
    auto out = make_tensor<Real>(x->shape, x->requires_grad);
    if (act == Activation::gelu)
        for (size_t i = 0; i < x->v.size(); ++i) out->v[i] = detail::gelu_fwd(x->v[i]);
    else
        for (size_t i = 0; i < x->v.size(); ++i) out->v[i] = x->v[i] > Real(0) ? x->v[i] : Real(0);
    if (x->requires_grad) {
        tape.record([x, out, act]() {
            x->ensure_grad();
            if (act == Activation::gelu)
                for (size_t i = 0; i < x->v.size(); ++i)
                    x->g[i] += out->g[i] * detail::gelu_bwd(x->v[i]);
            else
                for (size_t i = 0; i < x->v.size(); ++i)
                    x->g[i] += x->v[i] > Real(0) ? out->g[i] : Real(0);
        });
    }
    return out;
}

template <class Real>
TensorPtr<Real> tanh_op(TapeT<Real>& tape, const TensorPtr<Real>& x) {
    auto out = make_tensor<Real>(x->shape, x->requires_grad);
    for (size_t i = 0; i < x->v.size(); ++i) out->v[i] = std::tanh(x->v[i]);
    if (x->requires_grad) {
        tape.record([x, out]() {
            x->ensure_grad();
            for (size_t i = 0; i < x->v.size(); ++i)
                x->g[i] += out->g[i] * (Real(1) - out->v[i] * out->v[i]);
        });
    }
    return out;
}

template <class Real>
TensorPtr<Real> sigmoid(TapeT<Real>& tape, const TensorPtr<Real>& x) {
    auto out = make_tensor<Real>(x->shape, x->requires_grad);
    for (size_t i = 0; i < x->v.size(); ++i) out->v[i] = Real(1) / (Real(1) + std::exp(-x->v[i]));
    if (x->requires_grad) {
        tape.record([x, out]() {
            x->ensure_grad();
            for (size_t i = 0; i < x->v.size(); ++i)
                x->g[i] += out->g[i] * out->v[i] * (Real(1) - out->v[i]);
        });
    }
    return out;
}

// Softmax over row groups, per column: rows [offsets[g], offsets[g+1]) form
// group g and every column normalizes to 1 within the group.
template <class Real>
TensorPtr<Real> softmax_rows(TapeT<Real>& tape, const TensorPtr<Real>& x,
                             std::vector<int64_t> offsets) {
    const int64_t n = x->rows(), k = x->cols();
    if (offsets.empty() || offsets.front() != 0 || offsets.back() != n)
        throw Error::numeric("ShapeMismatch", "softmax_rows: offsets must cover all rows");
    for (size_t g = 0; g + 1 < offsets.size(); ++g)
        if (offsets[g + 1] <= offsets[g])
            throw Error::numeric("EmptyGroup", "softmax_rows: group " + std::to_string(g) + " is empty");

    auto out = make_tensor<Real>(x->shape, x->requires_grad);
    for (size_t g = 0; g + 1 < offsets.size(); ++g) {
        const int64_t lo = offsets[g], hi = offsets[g + 1];
        for (int64_t j = 0; j < k; ++j) {
            Real mx = x->v[lo * k + j];
            for (int64_t i = lo + 1; i < hi; ++i) mx = std::max(mx, x->v[i * k + j]);
            Real sum = 0;
            for (int64_t i = lo; i < hi; ++i) {
                Real e = std::exp(x->v[i * k + j] - mx);
                out->v[i * k + j] = e;
                sum += e;
            }
            for (int64_t i = lo; i < hi; ++i) out->v[i * k + j] /= sum;
        }
    }
    if (x->requires_grad) {
        tape.record([x, out, offsets = std::move(offsets), k]() {
            x->ensure_grad();
            for (size_t g = 0; g + 1 < offsets.size(); ++g) {
                const int64_t lo = offsets[g], hi = offsets[g + 1];
                for (int64_t j = 0; j < k; ++j) {
                    Real dot = 0;
                    for (int64_t i = lo; i < hi; ++i) dot += out->g[i * k + j] * out->v[i * k + j];
                    for (int64_t i = lo; i < hi; ++i)
                        x->g[i * k + j] += out->v[i * k + j] * (out->g[i * k + j] - dot);
                }
            }
        });
    }
    return out;
}

// score[e,i] = K[e, i*dh:(i+1)*dh] * W[i] * Q[e, i*dh:(i+1)*dh]^T for h head
// blocks W[i] of size dh x dh.
template <class Real>
TensorPtr<Real> bilinear_head_scores(TapeT<Real>& tape, const TensorPtr<Real>& K,
                                     const TensorPtr<Real>& Q, const TensorPtr<Real>& W) {
    const int64_t n = K->rows(), d = K->cols();
    if (W->shape.rank != 3 || Q->rows() != n || Q->cols() != d)
        throw Error::numeric("ShapeMismatch", "bilinear_head_scores: bad arguments");
    const int64_t h = W->shape.dim[0], dh = W->shape.dim[1];
    if (W->shape.dim[2] != dh || h * dh != d)
        throw Error::numeric("ShapeMismatch", "bilinear_head_scores: W " + W->shape.str());

    bool grad = K->requires_grad || Q->requires_grad || W->requires_grad;
    auto out = make_tensor<Real>({n, h}, grad);
    using Strided = Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>,
                               0, Eigen::OuterStride<>>;
    using StridedC =
        Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0,
                   Eigen::OuterStride<>>;
    for (int64_t i = 0; i < h; ++i) {
        StridedC k(K->v.data() + i * dh, n, dh, Eigen::OuterStride<>(d));
        StridedC q(Q->v.data() + i * dh, n, dh, Eigen::OuterStride<>(d));
        detail::ConstMatMap<Real> w(W->v.data() + i * dh * dh, dh, dh);
        Strided o(out->v.data() + i, n, 1, Eigen::OuterStride<>(h));
        o.col(0) = ((k * w).cwiseProduct(q)).rowwise().sum();
    }
    if (grad) {
        tape.record([K, Q, W, out, n, d, h, dh]() {
            if (K->requires_grad) K->ensure_grad();
            if (Q->requires_grad) Q->ensure_grad();
            if (W->requires_grad) W->ensure_grad();
            using Col = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
            for (int64_t i = 0; i < h; ++i) {
                StridedC k(K->v.data() + i * dh, n, dh, Eigen::OuterStride<>(d));
                StridedC q(Q->v.data() + i * dh, n, dh, Eigen::OuterStride<>(d));
                detail::ConstMatMap<Real> w(W->v.data() + i * dh * dh, dh, dh);
                StridedC go(out->g.data() + i, n, 1, Eigen::OuterStride<>(h));
                Col g = go.col(0);
                if (K->requires_grad) {
                    Strided kg(K->g.data() + i * dh, n, dh, Eigen::OuterStride<>(d));
                    kg.noalias() += g.asDiagonal() * (q * w.transpose());
                }
                if (Q->requires_grad) {
                    Strided qg(Q->g.data() + i * dh, n, dh, Eigen::OuterStride<>(d));
                    qg.noalias() += g.asDiagonal() * (k * w);
                }
                if (W->requires_grad) {
                    detail::MatMap<Real> wg(W->g.data() + i * dh * dh, dh, dh);
                    wg.noalias() += k.transpose() * (g.asDiagonal() * q);
                }
            }
        });
    }
    return out;
}

// out[e, i*dh+b] = sum_a M[e, i*dh+a] * W[i, a, b]: per-head right product.
template <class Real>
TensorPtr<Real> block_matmul_heads(TapeT<Real>& tape, const TensorPtr<Real>& M,
                                   const TensorPtr<Real>& W) {
    const int64_t n = M->rows(), d = M->cols();
    if (W->shape.rank != 3) throw Error::numeric("ShapeMismatch", "block_matmul_heads: W rank");
    const int64_t h = W->shape.dim[0], dh = W->shape.dim[1];
    if (W->shape.dim[2] != dh || h * dh != d)
        throw Error::numeric("ShapeMismatch", "block_matmul_heads: W " + W->shape.str());

    bool grad = M->requires_grad || W->requires_grad;
    auto out = make_tensor<Real>({n, d}, grad);
    for (int64_t i = 0; i < h; ++i) {
        detail::ConstMatMap<Real> w(W->v.data() + i * dh * dh, dh, dh);
        Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0,
                   Eigen::OuterStride<>>
            o(out->v.data() + i * dh, n, dh, Eigen::OuterStride<>(d));
        Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0,
                   Eigen::OuterStride<>>
            m(M->v.data() + i * dh, n, dh, Eigen::OuterStride<>(d));
        o.noalias() = m * w;
    }
    if (grad) {
        tape.record([M, W, out, n, d, h, dh]() {
            if (M->requires_grad) M->ensure_grad();
            if (W->requires_grad) W->ensure_grad();
            for (int64_t i = 0; i < h; ++i) {
                using StridedC = Eigen::Map<
                    const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0,
                    Eigen::OuterStride<>>;
                using Strided =
                    Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>,
                               0, Eigen::OuterStride<>>;
                StridedC go(out->g.data() + i * dh, n, dh, Eigen::OuterStride<>(d));
                detail::ConstMatMap<Real> w(W->v.data() + i * dh * dh, dh, dh);
                if (M->requires_grad) {
                    Strided mg(M->g.data() + i * dh, n, dh, Eigen::OuterStride<>(d));
                    mg.noalias() += go * w.transpose();
                }
                if (W->requires_grad) {
                    StridedC m(M->v.data() + i * dh, n, dh, Eigen::OuterStride<>(d));
                    detail::MatMap<Real> wg(W->g.data() + i * dh * dh, dh, dh);
                    wg.noalias() += m.transpose() * go;
                }
            }
        });
    }
    return out;
}

// Head-blockwise attention-weighted sums over row groups:
// out[g, i*dh+b] = sum_{rows r in group g} attn[r, i] * msgs[r, i*dh+b].
template <class Real>
TensorPtr<Real> segment_weighted_sum(TapeT<Real>& tape, const TensorPtr<Real>& attn,
                                     const TensorPtr<Real>& msgs, std::vector<int64_t> offsets) {
    const int64_t n = attn->rows(), h = attn->cols(), d = msgs->cols();
    if (msgs->rows() != n || d % h != 0)
        throw Error::numeric("ShapeMismatch", "segment_weighted_sum: bad arguments");
    if (offsets.empty() || offsets.front() != 0 || offsets.back() != n)
        throw Error::numeric("ShapeMismatch", "segment_weighted_sum: offsets must cover all rows");
    const int64_t dh = d / h;
    const int64_t groups = static_cast<int64_t>(offsets.size()) - 1;

    bool grad = attn->requires_grad || msgs->requires_grad;
    auto out = make_tensor<Real>({groups, d}, grad);
    for (int64_t g = 0; g < groups; ++g) {
        for (int64_t r = offsets[g]; r < offsets[g + 1]; ++r) {
            for (int64_t i = 0; i < h; ++i) {
                const Real a = attn->v[r * h + i];
                const Real* m = msgs->v.data() + r * d + i * dh;
                Real* o = out->v.data() + g * d + i * dh;
                for (int64_t b = 0; b < dh; ++b) o[b] += a * m[b];
            }
        }
    }
    if (grad) {
        tape.record([attn, msgs, out, offsets = std::move(offsets), h, d, dh]() {
            if (attn->requires_grad) attn->ensure_grad();
            if (msgs->requires_grad) msgs->ensure_grad();
            const int64_t groups = static_cast<int64_t>(offsets.size()) - 1;
            for (int64_t g = 0; g < groups; ++g) {
                for (int64_t r = offsets[g]; r < offsets[g + 1]; ++r) {
                    for (int64_t i = 0; i < h; ++i) {
                        const Real* go = out->g.data() + g * d + i * dh;
                        const Real* m = msgs->v.data() + r * d + i * dh;
                        if (attn->requires_grad) {
                            Real acc = 0;
                            for (int64_t b = 0; b < dh; ++b) acc += go[b] * m[b];
                            attn->g[r * h + i] += acc;
                        }
                        if (msgs->requires_grad) {
                            const Real a = attn->v[r * h + i];
                            Real* mg = msgs->g.data() + r * d + i * dh;
                            for (int64_t b = 0; b < dh; ++b) mg[b] += a * go[b];
                        }
                    }
                }
            }
        });
    }
    return out;
}

template <class Real>
TensorPtr<Real> rows_dot(TapeT<Real>& tape, const TensorPtr<Real>& a, const TensorPtr<Real>& b) {
    if (!(a->shape == b->shape)) throw Error::numeric("ShapeMismatch", "rows_dot");
    const int64_t n = a->rows(), c = a->cols();
    bool grad = a->requires_grad || b->requires_grad;
    auto out = make_tensor<Real>({n, 1}, grad);
    for (int64_t i = 0; i < n; ++i) {
        Real acc = 0;
        for (int64_t j = 0; j < c; ++j) acc += a->v[i * c + j] * b->v[i * c + j];
        out->v[i] = acc;
    }
    if (grad) {
        tape.record([a, b, out, n, c]() {
            if (a->requires_grad) a->ensure_grad();
            if (b->requires_grad) b->ensure_grad();
            for (int64_t i = 0; i < n; ++i) {
                const Real go = out->g[i];
                for (int64_t j = 0; j < c; ++j) {
                    if (a->requires_grad) a->g[i * c + j] += go * b->v[i * c + j];
                    if (b->requires_grad) b->g[i * c + j] += go * a->v[i * c + j];
                }
            }
        });
    }
    return out;
}

template <class Real>
TensorPtr<Real> sum_all(TapeT<Real>& tape, const TensorPtr<Real>& x) {
    auto out = make_tensor<Real>({1}, x->requires_grad);
    Real acc = 0;
    for (Real v : x->v) acc += v;
    out->v[0] = acc;
    if (x->requires_grad) {
        tape.record([x, out]() {
            x->ensure_grad();
            for (size_t i = 0; i < x->g.size(); ++i) x->g[i] += out->g[0];
        });
    }
    return out;
}

// Mean cross-entropy over rows from raw logits, with a fused stable backward.
template <class Real>
TensorPtr<Real> cross_entropy(TapeT<Real>& tape, const TensorPtr<Real>& logits,
                              const std::vector<int64_t>& labels) {
    const int64_t n = logits->rows(), C = logits->cols();
    if (static_cast<int64_t>(labels.size()) != n)
        throw Error::numeric("ShapeMismatch", "cross_entropy: label count");
    for (int64_t lbl : labels)
        if (lbl < 0 || lbl >= C)
            throw Error::data("LabelOutOfRange",
                              "label " + std::to_string(lbl) + " outside [0," + std::to_string(C) + ")");

    auto probs = std::make_shared<std::vector<Real>>(static_cast<size_t>(n * C));
    Real loss = 0;
    for (int64_t i = 0; i < n; ++i) {
        Real mx = logits->v[i * C];
        for (int64_t j = 1; j < C; ++j) mx = std::max(mx, logits->v[i * C + j]);
        Real sum = 0;
        for (int64_t j = 0; j < C; ++j) {
            Real e = std::exp(logits->v[i * C + j] - mx);
            (*probs)[i * C + j] = e;
            sum += e;
        }
        for (int64_t j = 0; j < C; ++j) (*probs)[i * C + j] /= sum;
        loss -= std::log((*probs)[i * C + labels[i]]);
    }
    auto out = make_tensor<Real>({1}, logits->requires_grad);
    out->v[0] = loss / static_cast<Real>(n);
    if (logits->requires_grad) {
        tape.record([logits, out, probs, labels, n, C]() {
            logits->ensure_grad();
            const Real go = out->g[0] / static_cast<Real>(n);
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < C; ++j)
                    logits->g[i * C + j] +=
                        go * ((*probs)[i * C + j] - (j == labels[i] ? Real(1) : Real(0)));
        });
    }
    return out;
}

// Mean binary cross-entropy on logits, numerically safe for large |x|.
template <class Real>
TensorPtr<Real> bce_with_logits(TapeT<Real>& tape, const TensorPtr<Real>& logits,
                                const std::vector<Real>& targets) {
    const int64_t n = logits->numel();
    if (static_cast<int64_t>(targets.size()) != n)
        throw Error::numeric("ShapeMismatch", "bce_with_logits: target count");
    Real loss = 0;
    for (int64_t i = 0; i < n; ++i) {
        const Real x = logits->v[i];
        loss += std::max(x, Real(0)) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
    }
    auto out = make_tensor<Real>({1}, logits->requires_grad);
    out->v[0] = loss / static_cast<Real>(n);
    if (logits->requires_grad) {
        tape.record([logits, out, targets, n]() {
            logits->ensure_grad();
            const Real go = out->g[0] / static_cast<Real>(n);
            for (int64_t i = 0; i < n; ++i) {
                const Real p = Real(1) / (Real(1) + std::exp(-logits->v[i]));
                logits->g[i] += go * (p - targets[i]);
            }
        });
    }
    return out;
}

}  // namespace hgt
