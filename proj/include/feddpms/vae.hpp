#pragma once

#include <random>
#include <span>
#include <stdexcept>
#include <utility>

#include "feddpms/nn.hpp"
#include "feddpms/tensor.hpp"

namespace feddpms {

// Encoder / classifier / decoder geometry. The decoder mirrors the encoder's
// hidden widths; the latent-mean head is sigmoid so every mu lands in [0,1]^l
// (the sensitivity bound depends on this).
struct VaeArch {
    std::size_t input_dim = 0;
    std::vector<std::size_t> enc_hidden{256};
    std::size_t clf_hidden = 128;
    std::size_t latent_dim = 32;
    std::size_t class_count = 10;

    void validate() const {
        if (input_dim == 0 || latent_dim == 0 || class_count < 2 || enc_hidden.empty())
            throw std::invalid_argument("VaeArch: invalid dimensions");
    }

    // encoder layout: trunk layers (relu), then mu head (sigmoid), logvar head (linear)
    std::size_t trunk_layer_count() const { return enc_hidden.size(); }

    MlpSpec classifier_spec() const {
        return {{latent_dim, clf_hidden, Activation::relu},
                {clf_hidden, class_count, Activation::linear}};
    }

    MlpSpec decoder_spec() const {
        MlpSpec s;
        std::size_t prev = latent_dim;
        for (auto it = enc_hidden.rbegin(); it != enc_hidden.rend(); ++it) {
            s.push_back({prev, *it, Activation::relu});
            prev = *it;
        }
        s.push_back({prev, input_dim, Activation::sigmoid});
        return s;
    }
};

inline ModelParams init_encoder(const VaeArch& a, std::mt19937_64& rng) {
    a.validate();
    ModelParams p;
    std::size_t prev = a.input_dim;
    for (std::size_t i = 0; i < a.enc_hidden.size(); ++i) {
        MlpSpec one{{prev, a.enc_hidden[i], Activation::relu}};
        ModelParams lp = init_mlp(one, "enc.trunk" + std::to_string(i), rng);
        p.layers.push_back(std::move(lp.layers[0]));
        prev = a.enc_hidden[i];
    }
    ModelParams mu = init_mlp({{prev, a.latent_dim, Activation::sigmoid}}, "enc.mu", rng);
    ModelParams lv = init_mlp({{prev, a.latent_dim, Activation::linear}}, "enc.logvar", rng);
    // start with small latent noise (std ~ 0.14); unit variance would drown
    // a [0,1]-bounded mean at init
    lv.layers[0].bias.fill(-4.0);
    p.layers.push_back(std::move(mu.layers[0]));
    p.layers.push_back(std::move(lv.layers[0]));
    return p;
}

inline ModelParams init_classifier(const VaeArch& a, std::mt19937_64& rng) {
    return init_mlp(a.classifier_spec(), "clf", rng);
}

inline ModelParams init_decoder(const VaeArch& a, std::mt19937_64& rng) {
    return init_mlp(a.decoder_spec(), "dec", rng);
}

struct LatentCode {
    Tensor mu;      // in [0,1]^l
    Tensor logvar;
    Tensor z;       // mu + exp(logvar/2) ⊙ eps
    Tensor eps;
};

namespace detail {

struct EncoderCache {
    std::vector<Tensor> trunk_acts;  // [0]=input, then each trunk layer output
    Tensor mu, logvar;
};

inline void encoder_forward(const VaeArch& a, const ModelParams& enc, const Tensor& x,
                            EncoderCache& c) {
    if (x.size() != a.input_dim) throw std::invalid_argument("encode: input shape mismatch");
    if (enc.layers.size() != a.trunk_layer_count() + 2)
        throw std::invalid_argument("encode: encoder params layout mismatch");
    c.trunk_acts.clear();
    c.trunk_acts.push_back(x);
    for (std::size_t i = 0; i < a.trunk_layer_count(); ++i) {
        const auto& W = enc.layers[i].weight;
        const auto& b = enc.layers[i].bias;
        const Tensor& in = c.trunk_acts.back();
        Tensor h = Tensor::vector(W.shape[0]);
        for (std::size_t r = 0; r < W.shape[0]; ++r) {
            double acc = b[r];
            const double* wrow = &W.data[r * W.shape[1]];
            for (std::size_t j = 0; j < W.shape[1]; ++j) acc += wrow[j] * in[j];
            h[r] = acc > 0.0 ? acc : 0.0;
        }
        c.trunk_acts.push_back(std::move(h));
    }
    const Tensor& top = c.trunk_acts.back();
    auto head = [&](const LayerParams& lp, Activation act) {
        Tensor out = Tensor::vector(lp.weight.shape[0]);
        for (std::size_t r = 0; r < lp.weight.shape[0]; ++r) {
            double acc = lp.bias[r];
            const double* wrow = &lp.weight.data[r * lp.weight.shape[1]];
            for (std::size_t j = 0; j < lp.weight.shape[1]; ++j) acc += wrow[j] * top[j];
            out[r] = apply_act(act, acc);
        }
        return out;
    };
    c.mu = head(enc.layers[a.trunk_layer_count()], Activation::sigmoid);
    c.logvar = head(enc.layers[a.trunk_layer_count() + 1], Activation::linear);
}

// dmu/dlogvar are gradients w.r.t. the head outputs; accumulates into genc,
// returns nothing (input grads are not needed anywhere).
inline void encoder_backward(const VaeArch& a, const ModelParams& enc, const EncoderCache& c,
                             const Tensor& dmu, const Tensor& dlogvar, ModelParams& genc) {
    const std::size_t H = a.trunk_layer_count();
    const Tensor& top = c.trunk_acts.back();
    Tensor dtop = Tensor::vector(top.size());
    // mu head (sigmoid)
    {
        const auto& lp = enc.layers[H];
        auto& g = genc.layers[H];
        for (std::size_t r = 0; r < lp.weight.shape[0]; ++r) {
            const double d = dmu[r] * c.mu[r] * (1.0 - c.mu[r]);
            g.bias[r] += d;
            double* grow = &g.weight.data[r * lp.weight.shape[1]];
            const double* wrow = &lp.weight.data[r * lp.weight.shape[1]];
            for (std::size_t j = 0; j < lp.weight.shape[1]; ++j) {
                grow[j] += d * top[j];
                dtop[j] += d * wrow[j];
            }
        }
    }
    // logvar head (linear)
    {
        const auto& lp = enc.layers[H + 1];
        auto& g = genc.layers[H + 1];
        for (std::size_t r = 0; r < lp.weight.shape[0]; ++r) {
            const double d = dlogvar[r];
            g.bias[r] += d;
            double* grow = &g.weight.data[r * lp.weight.shape[1]];
            const double* wrow = &lp.weight.data[r * lp.weight.shape[1]];
            for (std::size_t j = 0; j < lp.weight.shape[1]; ++j) {
                grow[j] += d * top[j];
                dtop[j] += d * wrow[j];
            }
        }
    }
    // trunk (relu)
    Tensor delta = std::move(dtop);
    for (std::size_t li = H; li-- > 0;) {
        const auto& lp = enc.layers[li];
        auto& g = genc.layers[li];
        const Tensor& y = c.trunk_acts[li + 1];
        const Tensor& x = c.trunk_acts[li];
        Tensor dx = Tensor::vector(x.size());
        for (std::size_t r = 0; r < lp.weight.shape[0]; ++r) {
            const double d = y[r] > 0.0 ? delta[r] : 0.0;
            g.bias[r] += d;
            double* grow = &g.weight.data[r * lp.weight.shape[1]];
            const double* wrow = &lp.weight.data[r * lp.weight.shape[1]];
            for (std::size_t j = 0; j < lp.weight.shape[1]; ++j) {
                grow[j] += d * x[j];
                dx[j] += d * wrow[j];
            }
        }
        delta = std::move(dx);
    }
}

}  // namespace detail

inline LatentCode encode(const VaeArch& a, const ModelParams& enc, const Tensor& x,
                         std::mt19937_64& rng) {
    detail::EncoderCache c;
    detail::encoder_forward(a, enc, x, c);
    LatentCode code;
    code.mu = c.mu;
    code.logvar = c.logvar;
    code.eps = Tensor::vector(a.latent_dim);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (auto& e : code.eps.data) e = n01(rng);
    code.z = Tensor::vector(a.latent_dim);
    for (std::size_t i = 0; i < a.latent_dim; ++i)
        code.z[i] = code.mu[i] + std::exp(0.5 * code.logvar[i]) * code.eps[i];
    return code;
}

// Deterministic latent mean only; used for class means and eval-time classification.
inline Tensor encode_mu(const VaeArch& a, const ModelParams& enc, const Tensor& x) {
    detail::EncoderCache c;
    detail::encoder_forward(a, enc, x, c);
    return c.mu;
}

inline Tensor decode(const VaeArch& a, const ModelParams& dec, const Tensor& z) {
    if (z.size() != a.latent_dim) throw std::invalid_argument("decode: latent shape mismatch");
    return mlp_forward(dec, a.decoder_spec(), z);
}

// Class probabilities from the deterministic latent mean.
inline Tensor classify(const VaeArch& a, const ModelParams& enc, const ModelParams& clf,
                       const Tensor& x) {
    Tensor mu = encode_mu(a, enc, x);
    Tensor logits = mlp_forward(clf, a.classifier_spec(), mu);
    return softmax(logits);
}

inline int predict(const VaeArch& a, const ModelParams& enc, const ModelParams& clf,
                   const Tensor& x) {
    Tensor p = classify(a, enc, clf, x);
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
        if (p[i] > p[best]) best = i;
    return int(best);
}

struct VaeModel {
    VaeArch arch;
    ModelParams enc, clf, dec;
};

struct VaeGrads {
    ModelParams enc, clf, dec;
};

struct BatchExample {
    const Tensor* x;
    int label;
};

namespace detail {

// Shared per-sample graph: encode -> reparameterize -> classifier on z
// (+ decoder and KLD when preliminary). Returns the per-sample loss and
// accumulates unscaled gradients.
inline double sample_loss_grads(const VaeModel& mo, const BatchExample& ex, const Tensor& eps,
                                double lambda, bool preliminary, VaeGrads* g) {
    const VaeArch& a = mo.arch;
    EncoderCache ec;
    encoder_forward(a, mo.enc, *ex.x, ec);
    Tensor z = Tensor::vector(a.latent_dim);
    for (std::size_t i = 0; i < a.latent_dim; ++i)
        z[i] = ec.mu[i] + std::exp(0.5 * ec.logvar[i]) * eps[i];

    ForwardCache cc;
    Tensor logits = mlp_forward(mo.clf, a.classifier_spec(), z, &cc);
    double loss = ce_loss(logits, ex.label);

    Tensor dz = Tensor::vector(a.latent_dim);
    Tensor dmu = Tensor::vector(a.latent_dim);
    Tensor dlogvar = Tensor::vector(a.latent_dim);

    if (g) {
        Tensor dlogits = ce_grad(logits, ex.label);
        Tensor dz_clf = mlp_backward(mo.clf, a.classifier_spec(), cc, dlogits, g->clf);
        for (std::size_t i = 0; i < a.latent_dim; ++i) dz[i] += dz_clf[i];
    }

    if (preliminary) {
        ForwardCache dc;
        Tensor xhat = mlp_forward(mo.dec, a.decoder_spec(), z, &dc);
        const double l3 = mse_loss(xhat, *ex.x);
        const double l2 = kld_loss(ec.mu, ec.logvar);
        loss += lambda * (l2 + l3);
        if (g) {
            Tensor dxhat = mse_grad(xhat, *ex.x);
            for (auto& v : dxhat.data) v *= lambda;
            Tensor dz_dec = mlp_backward(mo.dec, a.decoder_spec(), dc, dxhat, g->dec);
            for (std::size_t i = 0; i < a.latent_dim; ++i) dz[i] += dz_dec[i];
            kld_grad(ec.mu, ec.logvar, lambda, dmu, dlogvar);
        }
    }

    if (g) {
        // reparameterization: z = mu + exp(logvar/2) * eps
        for (std::size_t i = 0; i < a.latent_dim; ++i) {
            dmu[i] += dz[i];
            dlogvar[i] += dz[i] * eps[i] * 0.5 * std::exp(0.5 * ec.logvar[i]);
        }
        encoder_backward(a, mo.enc, ec, dmu, dlogvar, g->enc);
    }
    return loss;
}

}  // namespace detail

inline VaeGrads zero_grads(const VaeModel& mo) {
    return {mo.enc.zeros_like(), mo.clf.zeros_like(), mo.dec.zeros_like()};
}

// ℓ1 + λ(ℓ2 + ℓ3) averaged over the batch; eps holds one frozen draw per example.
inline double preliminary_loss(const VaeModel& mo, std::span<const BatchExample> batch,
                               double lambda, const std::vector<Tensor>& eps, VaeGrads* grads) {
    if (lambda < 0.0) throw std::invalid_argument("preliminary_loss: lambda must be >= 0");
    if (batch.empty() || eps.size() != batch.size())
        throw std::invalid_argument("preliminary_loss: batch/eps mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i)
        total += detail::sample_loss_grads(mo, batch[i], eps[i], lambda, true, grads);
    const double inv = 1.0 / double(batch.size());
    if (grads) {
        auto scale = [&](ModelParams& p) {
            for (auto& l : p.layers) {
                for (auto& v : l.weight.data) v *= inv;
                for (auto& v : l.bias.data) v *= inv;
            }
        };
        scale(grads->enc);
        scale(grads->clf);
        scale(grads->dec);
    }
    return total * inv;
}

// Cross-entropy only; the decoder is not in the graph so its grads stay zero.
inline double secondary_loss(const VaeModel& mo, std::span<const BatchExample> batch,
                             const std::vector<Tensor>& eps, VaeGrads* grads) {
    if (batch.empty() || eps.size() != batch.size())
        throw std::invalid_argument("secondary_loss: batch/eps mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i)
        total += detail::sample_loss_grads(mo, batch[i], eps[i], 0.0, false, grads);
    const double inv = 1.0 / double(batch.size());
    if (grads) {
        auto scale = [&](ModelParams& p) {
            for (auto& l : p.layers) {
                for (auto& v : l.weight.data) v *= inv;
                for (auto& v : l.bias.data) v *= inv;
            }
        };
        scale(grads->enc);
        scale(grads->clf);
    }
    return total * inv;
}

inline std::vector<Tensor> draw_eps(std::size_t count, std::size_t latent_dim,
                                    std::mt19937_64& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<Tensor> eps;
    eps.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Tensor e = Tensor::vector(latent_dim);
        for (auto& v : e.data) v = n01(rng);
        eps.push_back(std::move(e));
    }
    return eps;
}

}  // namespace feddpms
