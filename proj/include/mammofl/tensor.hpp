#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "mammofl/errors.hpp"

namespace mammofl::nn {

/// Dense row-major tensor. float for training, double for gradient checking.
template <typename T>
struct Tens {
    std::vector<int> dims;
    std::vector<T> data;

    Tens() = default;
    Tens(std::vector<int> d, std::vector<T> values) : dims(std::move(d)), data(std::move(values)) {
        if (count(dims) != static_cast<std::int64_t>(data.size()))
            throw ConfigError("tensor data length does not match dims");
    }

    static Tens zeros(std::vector<int> d) {
        std::int64_t n = count(d);
        return Tens(std::move(d), std::vector<T>(static_cast<std::size_t>(n), T(0)));
    }

    static Tens full(std::vector<int> d, T value) {
        std::int64_t n = count(d);
        return Tens(std::move(d), std::vector<T>(static_cast<std::size_t>(n), value));
    }

    static std::int64_t count(const std::vector<int>& d) {
        std::int64_t n = 1;
        for (int e : d) {
            if (e <= 0) throw ConfigError("tensor extent must be positive");
            n *= e;
        }
        return d.empty() ? 0 : n;
    }

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }

    int dim(int i) const { return dims[static_cast<std::size_t>(i)]; }

    bool same_shape(const Tens& o) const { return dims == o.dims; }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < dims.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(dims[i]);
        }
        return s + "]";
    }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

using Tensor = Tens<float>;
using Tensor64 = Tens<double>;

/// NaN/Inf anywhere in the network is a hard error, surfaced with context.
template <typename T>
inline void require_finite(const Tens<T>& t, const std::string& what) {
    if (!t.all_finite()) throw TrainingError("non-finite value in " + what);
}

template <typename T>
inline Tens<double> widen(const Tens<T>& t) {
    std::vector<double> d(t.data.begin(), t.data.end());
    return Tens<double>(t.dims, std::move(d));
}

template <typename T>
inline Tens<float> narrow(const Tens<T>& t) {
    std::vector<float> d(t.data.begin(), t.data.end());
    return Tens<float>(t.dims, std::move(d));
}

}  // namespace mammofl::nn
