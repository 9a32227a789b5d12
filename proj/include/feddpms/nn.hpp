#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "feddpms/tensor.hpp"

namespace feddpms {

enum class Activation { linear, relu, sigmoid };

struct LayerSpec {
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
    Activation act = Activation::linear;
};

using MlpSpec = std::vector<LayerSpec>;

inline void check_finite(const Tensor& t, const char* where) {
    for (double v : t.data)
        if (!std::isfinite(v)) throw std::runtime_error(std::string("non-finite value in ") + where);
}

inline double apply_act(Activation a, double x) {
    switch (a) {
        case Activation::linear: return x;
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-x));
    }
    return x;
}

// Derivative expressed through the activation output y = f(x).
inline double act_deriv_from_output(Activation a, double y) {
    switch (a) {
        case Activation::linear: return 1.0;
        case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
        case Activation::sigmoid: return y * (1.0 - y);
    }
    return 1.0;
}

// Xavier-uniform init; biases zero.
inline ModelParams init_mlp(const MlpSpec& spec, const std::string& prefix, std::mt19937_64& rng) {
    ModelParams p;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        const auto& ls = spec[i];
        LayerParams lp;
        lp.id = prefix + "." + std::to_string(i);
        lp.weight = Tensor::matrix(ls.fan_out, ls.fan_in);
        lp.bias = Tensor::vector(ls.fan_out);
        const double bound = std::sqrt(6.0 / double(ls.fan_in + ls.fan_out));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (auto& w : lp.weight.data) w = u(rng);
        p.layers.push_back(std::move(lp));
    }
    return p;
}

// Activations of every layer plus the input, kept for backward.
struct ForwardCache {
    std::vector<Tensor> acts;  // acts[0] = input, acts[i+1] = layer i output
    bool valid = false;
};

inline Tensor mlp_forward(const ModelParams& params, const MlpSpec& spec, const Tensor& input,
                          ForwardCache* cache = nullptr) {
    if (params.layers.size() != spec.size())
        throw std::invalid_argument("mlp_forward: params/spec layer count mismatch");
    if (input.size() != spec.front().fan_in)
        throw std::invalid_argument("mlp_forward: input shape mismatch");
    if (cache) {
        cache->acts.clear();
        cache->acts.push_back(input);
    }
    Tensor cur = input;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        const auto& ls = spec[i];
        const auto& W = params.layers[i].weight;
        const auto& b = params.layers[i].bias;
        if (W.shape[0] != ls.fan_out || W.shape[1] != ls.fan_in)
            throw std::invalid_argument("mlp_forward: weight shape mismatch at layer " + std::to_string(i));
        Tensor next = Tensor::vector(ls.fan_out);
        for (std::size_t r = 0; r < ls.fan_out; ++r) {
            double acc = b[r];
            const double* wrow = &W.data[r * ls.fan_in];
            for (std::size_t c = 0; c < ls.fan_in; ++c) acc += wrow[c] * cur[c];
            next[r] = apply_act(ls.act, acc);
        }
        cur = std::move(next);
        if (cache) cache->acts.push_back(cur);
    }
    if (cache) cache->valid = true;
    check_finite(cur, "mlp_forward output");
    return cur;
}

// Backpropagate dL/d(output activation); accumulates parameter gradients into
// `grads` (+=) and returns dL/d(input).
inline Tensor mlp_backward(const ModelParams& params, const MlpSpec& spec, const ForwardCache& cache,
                           const Tensor& dout, ModelParams& grads) {
    if (!cache.valid) throw std::logic_error("mlp_backward: no cached forward pass");
    if (cache.acts.size() != spec.size() + 1)
        throw std::logic_error("mlp_backward: cache/spec mismatch");
    Tensor delta = dout;  // dL/d(activation of current layer)
    for (std::size_t li = spec.size(); li-- > 0;) {
        const auto& ls = spec[li];
        const auto& W = params.layers[li].weight;
        const Tensor& y = cache.acts[li + 1];
        const Tensor& x = cache.acts[li];
        // through the activation
        Tensor dpre = Tensor::vector(ls.fan_out);
        for (std::size_t r = 0; r < ls.fan_out; ++r)
            dpre[r] = delta[r] * act_deriv_from_output(ls.act, y[r]);
        // parameter grads
        auto& gW = grads.layers[li].weight;
        auto& gb = grads.layers[li].bias;
        for (std::size_t r = 0; r < ls.fan_out; ++r) {
            gb[r] += dpre[r];
            double* grow = &gW.data[r * ls.fan_in];
            const double d = dpre[r];
            for (std::size_t c = 0; c < ls.fan_in; ++c) grow[c] += d * x[c];
        }
        // to the input
        Tensor dx = Tensor::vector(ls.fan_in);
        for (std::size_t r = 0; r < ls.fan_out; ++r) {
            const double d = dpre[r];
            const double* wrow = &W.data[r * ls.fan_in];
            for (std::size_t c = 0; c < ls.fan_in; ++c) dx[c] += d * wrow[c];
        }
        delta = std::move(dx);
    }
    return delta;
}

// ---- losses ----

inline Tensor softmax(const Tensor& logits) {
    Tensor p = logits;
    double mx = p[0];
    for (double v : p.data) mx = std::max(mx, v);
    double sum = 0.0;
    for (auto& v : p.data) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (auto& v : p.data) v /= sum;
    return p;
}

inline double ce_loss(const Tensor& logits, int label) {
    if (label < 0 || std::size_t(label) >= logits.size())
        throw std::invalid_argument("ce_loss: label out of range");
    double mx = logits[0];
    for (double v : logits.data) mx = std::max(mx, v);
    double lse = 0.0;
    for (double v : logits.data) lse += std::exp(v - mx);
    return std::log(lse) + mx - logits[std::size_t(label)];
}

inline Tensor ce_grad(const Tensor& logits, int label) {
    Tensor g = softmax(logits);
    g[std::size_t(label)] -= 1.0;
    return g;
}

// Mean over components, matching the reconstruction loss convention.
inline double mse_loss(const Tensor& xhat, const Tensor& x) {
    if (!xhat.same_shape(x)) throw std::invalid_argument("mse_loss: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = xhat[i] - x[i];
        s += d * d;
    }
    return s / double(x.size());
}

inline Tensor mse_grad(const Tensor& xhat, const Tensor& x) {
    Tensor g = Tensor::vector(x.size());
    const double scale = 2.0 / double(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = scale * (xhat[i] - x[i]);
    return g;
}

// KL(N(mu, exp(logvar)) || N(0, I)) in closed form, summed over dimensions.
inline double kld_loss(const Tensor& mu, const Tensor& logvar) {
    if (!mu.same_shape(logvar)) throw std::invalid_argument("kld_loss: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i)
        s += 1.0 + logvar[i] - mu[i] * mu[i] - std::exp(logvar[i]);
    return -0.5 * s;
}

inline void kld_grad(const Tensor& mu, const Tensor& logvar, double scale, Tensor& dmu, Tensor& dlogvar) {
    for (std::size_t i = 0; i < mu.size(); ++i) {
        dmu[i] += scale * mu[i];
        dlogvar[i] += scale * 0.5 * (std::exp(logvar[i]) - 1.0);
    }
}

// ---- Adam with step-decayed learning rate ----

struct OptimState {
    ModelParams m;  // first moments, mirrors params
    ModelParams v;  // second moments
    std::size_t step = 0;
    double base_lr = 1e-3;
    std::size_t decay_period = 10;
    double decay_factor = 0.5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static OptimState for_params(const ModelParams& p, double lr = 1e-3, std::size_t period = 10,
                                 double gamma = 0.5) {
        OptimState s;
        s.m = p.zeros_like();
        s.v = p.zeros_like();
        s.base_lr = lr;
        s.decay_period = period;
        s.decay_factor = gamma;
        return s;
    }

    // lr after `step` completed steps = base * gamma^⌊step/period⌋
    double current_lr() const {
        return base_lr * std::pow(decay_factor, double(step / decay_period));
    }
};

inline void adam_step(ModelParams& params, const ModelParams& grads, OptimState& opt) {
    if (!params.compatible_with(grads) || !params.compatible_with(opt.m))
        throw std::invalid_argument("adam_step: shape mismatch");
    const double lr = opt.current_lr();
    opt.step += 1;
    const double t = double(opt.step);
    const double bc1 = 1.0 - std::pow(opt.beta1, t);
    const double bc2 = 1.0 - std::pow(opt.beta2, t);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto upd = [&](Tensor& p, const Tensor& g, Tensor& m, Tensor& v) {
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
                v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                p[i] -= lr * mhat / (std::sqrt(vhat) + opt.eps);
            }
        };
        upd(params.layers[l].weight, grads.layers[l].weight, opt.m.layers[l].weight, opt.v.layers[l].weight);
        upd(params.layers[l].bias, grads.layers[l].bias, opt.m.layers[l].bias, opt.v.layers[l].bias);
        check_finite(params.layers[l].weight, "adam_step");
    }
}

}  // namespace feddpms
