#pragma once

#include <functional>

#include "hgt/params.hpp"
#include "hgt/tensor.hpp"

namespace hgt {

// Central-difference check of d(f)/d(params) against the tape's gradients.
// f rebuilds its graph on the given tape and returns the scalar loss; it must
// be deterministic in the parameter values. Returns the max over parameter
// entries of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
template <class Real>
double grad_check(ParamStoreT<Real>& params,
                  const std::function<TensorPtr<Real>(TapeT<Real>&)>& f, double eps = 1e-5) {
    params.zero_grad();
    TapeT<Real> tape;
    tape.backward(f(tape));

    std::vector<std::vector<Real>> analytic;
    analytic.reserve(params.tensors().size());
    for (const auto& t : params.tensors())
        analytic.emplace_back(t->g.begin(), t->g.end());

    auto eval = [&](void) -> double {
        TapeT<Real> fresh;
        auto loss = f(fresh);
        fresh.clear();
        return static_cast<double>(loss->v[0]);
    };

    double worst = 0.0;
    for (size_t ti = 0; ti < params.tensors().size(); ++ti) {
        auto& t = *params.tensors()[ti];
        for (size_t i = 0; i < t.v.size(); ++i) {
            const Real saved = t.v[i];
            t.v[i] = saved + static_cast<Real>(eps);
            const double up = eval();
            t.v[i] = saved - static_cast<Real>(eps);
            const double down = eval();
            t.v[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = static_cast<double>(analytic[ti][i]);
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    params.zero_grad();
    return worst;
}

}  // namespace hgt
