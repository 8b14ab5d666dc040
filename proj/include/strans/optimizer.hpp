#pragma once

#include "strans/blocks.hpp"

// Adam over a parameter list. Moments live here, keyed by registration
// order, so the whole optimizer state serializes with the checkpoint. The
// update touches stored weights directly; any runtime weight scaling in the
// layers therefore scales the effective step by the same constant.

namespace strans {

template <class T>
struct AdamState {
    std::vector<std::vector<T>> m, v;  // per-parameter moments
    std::int64_t t = 0;                // completed steps
};

template <class T>
struct Adam {
    T lr = T(1e-3);
    T beta1 = T(0);
    T beta2 = T(0.99);
    T eps = T(1e-8);
    AdamState<T> state;

    void attach(const ParamList<T>& params) {
        state.m.clear();
        state.v.clear();
        for (const auto& e : params.items) {
            const size_t n = e.trainable ? static_cast<size_t>(e.tensor.numel()) : 0;
            state.m.emplace_back(n, T(0));
            state.v.emplace_back(n, T(0));
        }
        state.t = 0;
    }

    /// Applies one update from the accumulated .grad() buffers and clears
    /// them. Parameters with no accumulated gradient are left untouched.
    void step(ParamList<T>& params) {
        ST_CHECK(state.m.size() == params.items.size(),
                 "optimizer not attached to this parameter list");
        ++state.t;
        const T bc2 = T(1) - std::pow(beta2, static_cast<T>(state.t));
        const T bc1 = T(1) - std::pow(beta1, static_cast<T>(state.t));
        for (size_t p = 0; p < params.items.size(); ++p) {
            auto& e = params.items[p];
            if (!e.trainable || !e.tensor.has_grad()) continue;
            const std::vector<T>& g = e.tensor.grad();
            std::vector<T>& m = state.m[p];
            std::vector<T>& v = state.v[p];
            std::vector<T>& w = e.tensor.raw();
            for (size_t i = 0; i < g.size(); ++i) {
                m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
                v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
                const T mhat = m[i] / bc1;
                const T vhat = v[i] / bc2;
                w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
            e.tensor.zero_grad();
        }
    }

    void zero_grad(ParamList<T>& params) {
        for (auto& e : params.items) e.tensor.zero_grad();
    }
};

}  // namespace strans
