#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "feddpms/rng.hpp"
#include "feddpms/tensor.hpp"

namespace feddpms {

struct Sample {
    Tensor features;
    int label = 0;
    bool synthetic = false;  // DPMS provenance; real-only statistics skip these
};

struct Dataset {
    std::vector<Sample> samples;
    std::size_t class_count = 0;

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> counts(class_count, 0);
        for (const auto& s : samples) {
            if (s.label < 0 || std::size_t(s.label) >= class_count)
                throw std::logic_error("Dataset: label out of range");
            counts[std::size_t(s.label)]++;
        }
        return counts;
    }

    std::size_t size() const { return samples.size(); }
    std::size_t real_count() const {
        std::size_t n = 0;
        for (const auto& s : samples) n += s.synthetic ? 0 : 1;
        return n;
    }
};

struct PartitionSpec {
    std::size_t client_count = 10;
    double concentration = 0.5;  // Dirichlet beta
    std::uint64_t seed = 0;
};

// Per class c: draw p ~ Dir(beta * 1_K), then split that class's samples
// across the K clients by cumulative proportions. Every sample lands on
// exactly one client.
inline std::vector<Dataset> dirichlet_partition(const Dataset& src, const PartitionSpec& spec) {
    if (src.samples.empty()) throw std::invalid_argument("dirichlet_partition: empty source");
    if (spec.concentration <= 0.0) throw std::invalid_argument("dirichlet_partition: beta must be > 0");
    if (spec.client_count < 1) throw std::invalid_argument("dirichlet_partition: K must be >= 1");

    const std::size_t K = spec.client_count;
    std::vector<Dataset> parts(K);
    for (auto& p : parts) p.class_count = src.class_count;

    auto rng = make_stream(spec.seed, std::uint64_t(StreamKind::partition));
    std::gamma_distribution<double> gamma(spec.concentration, 1.0);

    // indices per class, in source order
    std::vector<std::vector<std::size_t>> by_class(src.class_count);
    for (std::size_t i = 0; i < src.samples.size(); ++i)
        by_class[std::size_t(src.samples[i].label)].push_back(i);

    for (std::size_t c = 0; c < src.class_count; ++c) {
        const auto& idx = by_class[c];
        if (idx.empty()) continue;
        std::vector<double> p(K);
        double sum = 0.0;
        for (auto& v : p) {
            v = gamma(rng);
            sum += v;
        }
        if (sum <= 0.0) {  // pathological gamma draws at tiny beta
            std::fill(p.begin(), p.end(), 1.0);
            sum = double(K);
        }
        // cumulative cut points over the class's sample list
        std::size_t start = 0;
        double cum = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            cum += p[k] / sum;
            std::size_t end = (k + 1 == K) ? idx.size()
                                           : std::min(idx.size(), std::size_t(cum * double(idx.size()) + 0.5));
            if (end < start) end = start;
            for (std::size_t i = start; i < end; ++i) parts[k].samples.push_back(src.samples[idx[i]]);
            start = end;
        }
    }
    return parts;
}

// Scarce (fewest samples, ascending) and abundant (most samples, descending)
// class indices; ties broken by lower class index. A client with fewer than
// 2n represented classes gets overlapping sets and is flagged degenerate.
struct ClassProfile {
    std::vector<int> scarce;    // H_i, ascending by count
    std::vector<int> abundant;  // C_i, descending by count
    bool degenerate = false;
};

inline ClassProfile class_profile(const Dataset& d, std::size_t n) {
    if (n > d.class_count) throw std::invalid_argument("class_profile: n exceeds class count");
    const auto counts = d.class_counts();
    std::vector<int> order(d.class_count);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (counts[std::size_t(a)] != counts[std::size_t(b)]) return counts[std::size_t(a)] < counts[std::size_t(b)];
        return a < b;
    });
    // abundant side gets its own order: descending count, lower index within ties
    std::vector<int> desc(d.class_count);
    std::iota(desc.begin(), desc.end(), 0);
    std::stable_sort(desc.begin(), desc.end(), [&](int a, int b) {
        return counts[std::size_t(a)] > counts[std::size_t(b)];
    });
    ClassProfile p;
    for (std::size_t i = 0; i < n; ++i) p.scarce.push_back(order[i]);
    for (std::size_t i = 0; i < n; ++i) p.abundant.push_back(desc[i]);
    std::size_t represented = 0;
    for (auto c : counts) represented += (c > 0) ? 1 : 0;
    p.degenerate = represented < 2 * n;
    return p;
}

inline Dataset merge_synthetic(const Dataset& local, const Dataset& synth) {
    if (local.class_count != synth.class_count)
        throw std::invalid_argument("merge_synthetic: class count mismatch");
    if (!synth.samples.empty() && !local.samples.empty() &&
        synth.samples[0].features.size() != local.samples[0].features.size())
        throw std::invalid_argument("merge_synthetic: feature shape mismatch");
    Dataset merged = local;
    for (const auto& s : synth.samples) {
        Sample copy = s;
        copy.synthetic = true;
        merged.samples.push_back(std::move(copy));
    }
    return merged;
}

// Uniform subsample without replacement, fresh each call.
inline std::vector<const Sample*> sample_round_subset(const Dataset& merged, std::size_t target,
                                                      std::mt19937_64& rng) {
    if (target > merged.size())
        throw std::invalid_argument("sample_round_subset: target exceeds dataset size");
    std::vector<const Sample*> view;
    view.reserve(merged.size());
    for (const auto& s : merged.samples) view.push_back(&s);
    std::shuffle(view.begin(), view.end(), rng);
    view.resize(target);
    return view;
}

// Labeled Gaussian clusters: class c gets a random unit-ish centroid, samples
// are centroid + N(0, spread^2) per coordinate. Linearly separable when the
// centroid spacing dominates the spread (spacing/spread >= ~4 in practice).
inline Dataset make_synthetic_source(std::size_t classes, std::size_t per_class, double spread,
                                     std::size_t feature_dim, std::uint64_t seed) {
    if (classes < 2) throw std::invalid_argument("make_synthetic_source: need >= 2 classes");
    if (per_class == 0) throw std::invalid_argument("make_synthetic_source: nonpositive count");
    auto rng = make_stream(seed, std::uint64_t(StreamKind::synthetic_data));
    std::normal_distribution<double> n01(0.0, 1.0);
    std::uniform_real_distribution<double> ucent(0.2, 0.8);

    // centroids drawn in [0.2, 0.8]^d so noisy samples mostly stay in [0,1]
    std::vector<Tensor> centroids;
    for (std::size_t c = 0; c < classes; ++c) {
        Tensor cent = Tensor::vector(feature_dim);
        for (auto& v : cent.data) v = ucent(rng);
        centroids.push_back(std::move(cent));
    }
    Dataset d;
    d.class_count = classes;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < per_class; ++i) {
            Sample s;
            s.label = int(c);
            s.features = Tensor::vector(feature_dim);
            for (std::size_t j = 0; j < feature_dim; ++j) {
                double v = centroids[c][j] + spread * n01(rng);
                s.features[j] = std::clamp(v, 0.0, 1.0);
            }
            d.samples.push_back(std::move(s));
        }
    }
    return d;
}

inline Dataset train_test_split(Dataset& d, double test_fraction, std::uint64_t seed) {
    auto rng = make_stream(seed, std::uint64_t(StreamKind::shuffle));
    std::shuffle(d.samples.begin(), d.samples.end(), rng);
    const std::size_t test_n = std::size_t(double(d.samples.size()) * test_fraction);
    Dataset test;
    test.class_count = d.class_count;
    test.samples.assign(d.samples.end() - long(test_n), d.samples.end());
    d.samples.resize(d.samples.size() - test_n);
    return test;
}

}  // namespace feddpms
