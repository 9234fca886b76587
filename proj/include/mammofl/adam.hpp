#pragma once

#include <cmath>

#include "mammofl/errors.hpp"
#include "mammofl/weights.hpp"

namespace mammofl::nn {

/// Classic Adam with bias correction. Weight decay is coupled into the
/// gradient (g <- g + wd*w) before the moment updates.
template <typename T>
struct AdamState {
    double learning_rate = 1e-4;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step_count = 0;
    WeightMap<T> first_moments;
    WeightMap<T> second_moments;

    static AdamState for_weights(const WeightMap<T>& w, double lr, double wd) {
        AdamState s;
        s.learning_rate = lr;
        s.weight_decay = wd;
        for (const auto& [name, t] : w.entries) {
            s.first_moments.entries.emplace(name, Tens<T>::zeros(t.dims));
            s.second_moments.entries.emplace(name, Tens<T>::zeros(t.dims));
        }
        return s;
    }
};

template <typename T>
void adam_step(AdamState<T>& state, WeightMap<T>& weights, const WeightMap<T>& grads) {
    if (!weights.same_structure(grads)) throw ConfigError("adam: gradient shapes mismatch weights");
    if (!state.first_moments.same_structure(weights))
        throw ConfigError("adam: optimizer state does not match weights");
    state.step_count += 1;
    const T b1 = static_cast<T>(state.beta1);
    const T b2 = static_cast<T>(state.beta2);
    const T corr1 = static_cast<T>(1.0 - std::pow(state.beta1, static_cast<double>(state.step_count)));
    const T corr2 = static_cast<T>(1.0 - std::pow(state.beta2, static_cast<double>(state.step_count)));
    const T lr = static_cast<T>(state.learning_rate);
    const T wd = static_cast<T>(state.weight_decay);
    const T eps = static_cast<T>(state.eps);

    auto wi = weights.entries.begin();
    auto gi = grads.entries.begin();
    auto mi = state.first_moments.entries.begin();
    auto vi = state.second_moments.entries.begin();
    for (; wi != weights.entries.end(); ++wi, ++gi, ++mi, ++vi) {
        if (!gi->second.all_finite())
            throw TrainingError("non-finite gradient in parameter " + gi->first);
        T* w = wi->second.data.data();
        const T* g = gi->second.data.data();
        T* m = mi->second.data.data();
        T* v = vi->second.data.data();
        const std::size_t n = wi->second.data.size();
        for (std::size_t k = 0; k < n; ++k) {
            const T gk = g[k] + wd * w[k];
            m[k] = b1 * m[k] + (T(1) - b1) * gk;
            v[k] = b2 * v[k] + (T(1) - b2) * gk * gk;
            const T mhat = m[k] / corr1;
            const T vhat = v[k] / corr2;
            w[k] -= lr * (mhat / (std::sqrt(vhat) + eps));
        }
    }
}

}  // namespace mammofl::nn
