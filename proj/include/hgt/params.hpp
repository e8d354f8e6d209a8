#pragma once

#include <map>
#include <string>
#include <vector>

#include "hgt/rng.hpp"
#include "hgt/tensor.hpp"

namespace hgt {

template <class Real>
const char* dtype_name();
template <>
inline const char* dtype_name<float>() {
    return "f32";
}
template <>
inline const char* dtype_name<double>() {
    return "f64";
}

// Named trainable tensors with deterministic (insertion) iteration order.
template <class Real>
class ParamStoreT {
public:
    TensorPtr<Real> create(const std::string& name, Shape shape) {
        if (index_.contains(name))
            throw Error::config("DuplicateParam", "parameter '" + name + "' already exists");
        auto t = make_tensor<Real>(shape, /*requires_grad=*/true);
        t->name = name;
        index_[name] = list_.size();
        list_.push_back(t);
        return t;
    }

    TensorPtr<Real> create_glorot(const std::string& name, int64_t fan_in, int64_t fan_out,
                                  Shape shape, CounterRng& rng) {
        auto t = create(name, shape);
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (auto& v : t->v) v = static_cast<Real>(rng.next_uniform(-a, a));
        return t;
    }

    TensorPtr<Real> create_const(const std::string& name, Shape shape, Real value) {
        auto t = create(name, shape);
        for (auto& v : t->v) v = value;
        return t;
    }

    TensorPtr<Real> get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end())
            throw Error::config("UnknownParam", "no parameter named '" + name + "'");
        return list_[it->second];
    }

    bool has(const std::string& name) const { return index_.contains(name); }

    const std::vector<TensorPtr<Real>>& tensors() const { return list_; }

    int64_t param_count() const {
        int64_t n = 0;
        for (const auto& t : list_) n += t->numel();
        return n;
    }

    void zero_grad() {
        for (auto& t : list_) t->zero_grad();
    }

    void save(const std::string& dir, uint64_t config_hash, uint64_t seed) const;
    // Loads into a freshly-declared store: shapes and names must match.
    void load(const std::string& dir);
    static std::string stored_dtype(const std::string& dir);
    static uint64_t stored_config_hash(const std::string& dir);

private:
    std::vector<TensorPtr<Real>> list_;
    std::map<std::string, size_t> index_;
};

using ParamStore = ParamStoreT<double>;

}  // namespace hgt
