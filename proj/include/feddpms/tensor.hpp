#pragma once

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace feddpms {

// Row-major dense tensor of doubles. Desk-scale: no views, no strides.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(size_from_shape(shape), 0.0);
    }

    Tensor(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != size_from_shape(shape))
            throw std::invalid_argument("Tensor: data length does not match shape");
    }

    static std::size_t size_from_shape(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) {
            if (d == 0) throw std::invalid_argument("Tensor: zero dimension");
            n *= d;
        }
        return n;
    }

    static Tensor vector(std::size_t n) { return Tensor({n}); }
    static Tensor matrix(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    // 2-D accessors; matrix is (rows = fan-out, cols = fan-in).
    double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

// Named, ordered parameter list: the unit of upload / download / aggregation.
struct LayerParams {
    std::string id;
    Tensor weight;  // (out, in)
    Tensor bias;    // (out)
};

struct ModelParams {
    std::vector<LayerParams> layers;

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.weight.size() + l.bias.size();
        return n;
    }

    bool compatible_with(const ModelParams& o) const {
        if (layers.size() != o.layers.size()) return false;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].id != o.layers[i].id) return false;
            if (layers[i].weight.shape != o.layers[i].weight.shape) return false;
            if (layers[i].bias.shape != o.layers[i].bias.shape) return false;
        }
        return true;
    }

    ModelParams zeros_like() const {
        ModelParams g = *this;
        for (auto& l : g.layers) {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
        return g;
    }
};

// out = sum_i weight[i] * params[i]; weights must sum to ~1 but that is the
// caller's contract (aggregation paths normalize explicitly).
inline ModelParams weighted_sum(const std::vector<const ModelParams*>& parts,
                                const std::vector<double>& weights) {
    if (parts.empty() || parts.size() != weights.size())
        throw std::invalid_argument("weighted_sum: size mismatch");
    for (std::size_t i = 1; i < parts.size(); ++i)
        if (!parts[0]->compatible_with(*parts[i]))
            throw std::invalid_argument("weighted_sum: incompatible ModelParams");
    ModelParams out = parts[0]->zeros_like();
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const double w = weights[i];
        for (std::size_t l = 0; l < out.layers.size(); ++l) {
            const auto& src = parts[i]->layers[l];
            auto& dst = out.layers[l];
            for (std::size_t j = 0; j < dst.weight.size(); ++j) dst.weight[j] += w * src.weight[j];
            for (std::size_t j = 0; j < dst.bias.size(); ++j) dst.bias[j] += w * src.bias[j];
        }
    }
    return out;
}

}  // namespace feddpms
