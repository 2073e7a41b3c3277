#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "wdmatch/errors.hpp"
#include "wdmatch/tensor.hpp"

namespace wdmatch {

// Named parameter tensors of one network (F, M or G). std::map keeps the
// iteration order stable, which the determinism guarantees rely on.
struct ParamSet {
    std::map<std::string, Tensor> tensors;

    bool empty() const { return tensors.empty(); }
    std::size_t count() const { return tensors.size(); }

    Tensor& at(const std::string& name) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw StateError("no parameter named '" + name + "'");
        return it->second;
    }

    const Tensor& at(const std::string& name) const {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw StateError("no parameter named '" + name + "'");
        return it->second;
    }

    double max_abs() const {
        double m = 0.0;
        for (const auto& [name, t] : tensors) m = std::max(m, t.max_abs());
        return m;
    }

    std::uint64_t checksum() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const auto& [name, t] : tensors) {
            h = fnv1a64(name.data(), name.size(), h);
            h = wdmatch::checksum(t, h);
        }
        return h;
    }
};

enum class StepDirection { Minimize, Maximize };

// Adam accumulators for one ParamSet. t counts completed steps.
struct AdamState {
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
    std::int64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState init(const ParamSet& params, double beta1 = 0.9, double beta2 = 0.999,
                          double eps = 1e-8) {
        AdamState s;
        s.beta1 = beta1;
        s.beta2 = beta2;
        s.eps = eps;
        for (const auto& [name, tensor] : params.tensors) {
            s.m[name] = Tensor(tensor.shape());
            s.v[name] = Tensor(tensor.shape());
        }
        return s;
    }
};

// One bias-corrected Adam update. Maximize flips the gradient sign and then
// follows the exact minimize path, so the two directions are mirror images.
inline void adam_step(ParamSet& params, const std::map<std::string, Tensor>& grads,
                      AdamState& state, double lr, StepDirection direction) {
    if (lr <= 0.0) throw ConfigError("adam_step: learning rate must be positive");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (auto& [name, p] : params.tensors) {
        auto git = grads.find(name);
        if (git == grads.end()) throw StateError("adam_step: missing gradient for '" + name + "'");
        const Tensor& g = git->second;
        if (!g.same_shape(p)) {
            throw ShapeError("adam_step: gradient for '" + name + "' has shape " +
                             g.shape_string() + ", parameter has " + p.shape_string());
        }
        Tensor& m = state.m.at(name);
        Tensor& v = state.v.at(name);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = direction == StepDirection::Maximize ? -g[i] : g[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
        p.ensure_finite("adam_step('" + name + "')");
    }
}

// Clamp every component into [-c, c]. Idempotent and componentwise monotone.
inline void clip_params(ParamSet& params, double c) {
    if (c <= 0.0) throw ConfigError("clip_params: threshold must be positive, got " +
                                    std::to_string(c));
    for (auto& [name, t] : params.tensors) {
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (t[i] > c) {
                t[i] = c;
            } else if (t[i] < -c) {
                t[i] = -c;
            }
        }
    }
}

} // namespace wdmatch
