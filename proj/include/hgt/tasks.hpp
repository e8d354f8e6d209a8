#pragma once

#include <optional>
#include <vector>

#include "hgt/params.hpp"
#include "hgt/rng.hpp"
#include "hgt/tensor.hpp"

namespace hgt {

// Softmax classification head: one linear map from the hidden space to the
// label vocabulary, trained with mean cross-entropy.
template <class Real>
class ClassificationHeadT {
public:
    ClassificationHeadT(ParamStoreT<Real>& store, int64_t hidden_dim, int64_t classes)
        : classes_(classes) {
        W_ = store.has("head.cls.W") ? store.get("head.cls.W")
                                     : store.create("head.cls.W", {hidden_dim, classes});
        b_ = store.has("head.cls.b") ? store.get("head.cls.b")
                                     : store.create("head.cls.b", {classes});
    }

    void init(CounterRng& rng) {
        const double a = std::sqrt(6.0 / static_cast<double>(W_->shape.dim[0] + classes_));
        for (auto& v : W_->v) v = static_cast<Real>(rng.next_uniform(-a, a));
        std::fill(b_->v.begin(), b_->v.end(), Real(0));
    }

    TensorPtr<Real> logits(TapeT<Real>& tape, const TensorPtr<Real>& h) const {
        return linear(tape, h, W_, b_);
    }

    TensorPtr<Real> loss(TapeT<Real>& tape, const TensorPtr<Real>& h,
                         const std::vector<int64_t>& labels,
                         TensorPtr<Real>* logits_out = nullptr) const {
        auto lg = logits(tape, h);
        if (logits_out) *logits_out = lg;
        return cross_entropy(tape, lg, labels);
    }

    int64_t classes() const { return classes_; }

private:
    int64_t classes_;
    TensorPtr<Real> W_, b_;
};

// Neural tensor network pair scorer:
//   score(p, a) = w . tanh([p W_1 a, ..., p W_k a] + V [p; a] + b)
// squashed through a sigmoid.
template <class Real>
class NtnHeadT {
public:
    NtnHeadT(ParamStoreT<Real>& store, int64_t hidden_dim, int64_t slices = 4)
        : dim_(hidden_dim), slices_(slices) {
        if (slices_ < 1) throw Error::config("BadConfig", "ntn needs at least one slice");
        auto get_or = [&](const std::string& name, Shape shape) {
            return store.has(name) ? store.get(name) : store.create(name, shape);
        };
        for (int64_t s = 0; s < slices_; ++s)
            slice_.push_back(get_or("head.ntn.slice" + std::to_string(s), {dim_, dim_}));
        VW_ = get_or("head.ntn.V.W", {2 * dim_, slices_});
        Vb_ = get_or("head.ntn.V.b", {slices_});
        out_ = get_or("head.ntn.out", {slices_, 1});
    }

    void init(CounterRng& rng) {
        auto glorot = [&](TensorPtr<Real>& t, int64_t fi, int64_t fo) {
            const double a = std::sqrt(6.0 / static_cast<double>(fi + fo));
            for (auto& v : t->v) v = static_cast<Real>(rng.next_uniform(-a, a));
        };
        for (auto& s : slice_) glorot(s, dim_, dim_);
        glorot(VW_, 2 * dim_, slices_);
        std::fill(Vb_->v.begin(), Vb_->v.end(), Real(0));
        glorot(out_, slices_, 1);
    }

    // Raw pair logits for row-aligned batches of source/candidate vectors.
    TensorPtr<Real> logits(TapeT<Real>& tape, const TensorPtr<Real>& p,
                           const TensorPtr<Real>& a) const {
        if (p->cols() != dim_ || a->cols() != dim_ || p->rows() != a->rows())
            throw Error::numeric("ShapeMismatch", "ntn: p " + p->shape.str() + " vs a " + a->shape.str());
        std::vector<TensorPtr<Real>> cols;
        for (const auto& w : slice_) cols.push_back(rows_dot(tape, matmul(tape, p, w), a));
        TensorPtr<Real> bilinear = cols[0];
        for (size_t i = 1; i < cols.size(); ++i) bilinear = hcat(tape, bilinear, cols[i]);
        auto pair_term = linear(tape, hcat(tape, p, a), VW_, Vb_);
        return matmul(tape, tanh_op(tape, add(tape, bilinear, pair_term)), out_);
    }

    TensorPtr<Real> prob(TapeT<Real>& tape, const TensorPtr<Real>& p,
                         const TensorPtr<Real>& a) const {
        return sigmoid(tape, logits(tape, p, a));
    }

private:
    int64_t dim_, slices_;
    std::vector<TensorPtr<Real>> slice_;
    TensorPtr<Real> VW_, Vb_, out_;
};

// DCG@k / IDCG@k with gain = relevance and 1/log2(rank+1) discounts, ranks
// from 1. All-zero relevance returns 0 by convention.
double ndcg(const std::vector<double>& ranked_relevances,
            std::optional<int64_t> cutoff = std::nullopt);

// 1 / rank of the first positive. Throws NoPositive when nothing is relevant.
double mrr(const std::vector<int>& ranked_binary);

double mean_mrr(const std::vector<std::vector<int>>& queries);

}  // namespace hgt
