#pragma once

#include <bit>
#include <fstream>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "feddpms/protocol.hpp"

namespace feddpms {

struct SyntheticSpec {
    std::size_t classes = 10;
    std::size_t per_class = 1000;
    double spread = 0.08;
    std::size_t feature_dim = 16;
};

struct ExperimentConfig {
    // dataset source: synthetic unless IDX paths are set
    SyntheticSpec synthetic;
    std::string idx_images;
    std::string idx_labels;

    Scheme scheme = Scheme::feddpms;
    std::size_t K = 10;
    std::size_t k = 10;
    double beta = 0.5;
    std::size_t T = 50;
    std::size_t T_p = 20;
    std::size_t local_epochs = 5;
    std::size_t batch_size = 64;
    double lambda = 0.05;
    std::size_t n = 3;
    std::size_t alpha = 100;
    double noise_std = 0.05;
    double mu_prox = 0.001;
    double lr = 1e-3;
    std::size_t lr_decay_period = 10;
    double lr_decay_gamma = 0.5;
    std::size_t max_attempts = 50;
    std::uint64_t master_seed = 1;
    std::size_t trials = 1;
    double test_fraction = 0.2;
    bool stub_training = false;
    std::string output_dir = "out";

    // model geometry (desk-scale MLP backbone)
    std::vector<std::size_t> enc_hidden{64};
    std::size_t clf_hidden = 32;
    std::size_t latent_dim = 8;

    // DP reporting anchors
    double report_epsilon = 0.5;
    double report_delta = 0.01;

    bool uses_idx() const { return !idx_images.empty(); }

    void validate() const {
        if (beta <= 0.0) throw std::invalid_argument("config: beta must be > 0");
        if (K == 0 || k == 0 || k > K) throw std::invalid_argument("config: need 0 < k <= K");
        if (T == 0) throw std::invalid_argument("config: T must be > 0");
        if (scheme == Scheme::feddpms && T_p >= T)
            throw std::invalid_argument("config: feddpms requires T_p < T");
        if (lambda < 0.0) throw std::invalid_argument("config: lambda must be >= 0");
        if (noise_std < 0.0) throw std::invalid_argument("config: noise_std must be >= 0");
        if (trials == 0) throw std::invalid_argument("config: trials must be >= 1");
        if (test_fraction <= 0.0 || test_fraction >= 1.0)
            throw std::invalid_argument("config: test_fraction in (0,1)");
    }

    VaeArch arch(std::size_t input_dim, std::size_t classes) const {
        VaeArch a;
        a.input_dim = input_dim;
        a.enc_hidden = enc_hidden;
        a.clf_hidden = clf_hidden;
        a.latent_dim = latent_dim;
        a.class_count = classes;
        return a;
    }

    ProtocolConfig protocol(std::uint64_t seed) const {
        ProtocolConfig p;
        p.K = K;
        p.k = k;
        p.T = T;
        p.T_p = T_p;
        p.local_epochs = local_epochs;
        p.batch_size = batch_size;
        p.lambda = lambda;
        p.n = n;
        p.alpha = alpha;
        p.noise_std = noise_std;
        p.mu_prox = mu_prox;
        p.max_attempts = max_attempts;
        p.lr = lr;
        p.lr_decay_period = lr_decay_period;
        p.lr_decay_gamma = lr_decay_gamma;
        p.master_seed = seed;
        p.stub_training = stub_training;
        return p;
    }

    // Partition seed depends on (master seed, beta) only, never the scheme, so
    // cross-scheme comparisons see identical splits.
    std::uint64_t partition_seed(std::uint64_t seed) const {
        return mix_seed(seed, std::bit_cast<std::uint64_t>(beta));
    }
};

inline Scheme parse_scheme(const std::string& s) {
    if (s == "feddpms") return Scheme::feddpms;
    if (s == "fedavg") return Scheme::fedavg;
    if (s == "fedprox") return Scheme::fedprox;
    throw std::invalid_argument("config: unknown scheme '" + s + "'");
}

// JSON config file; unknown keys are rejected so typos never pass silently.
inline ExperimentConfig parse_config_json(const nlohmann::json& j) {
    ExperimentConfig c;
    static const std::set<std::string> known{
        "classes", "per_class", "spread", "feature_dim", "idx_images", "idx_labels",
        "scheme", "K", "k", "beta", "T", "T_p", "local_epochs", "batch_size", "lambda",
        "n", "alpha", "noise_std", "mu_prox", "lr", "lr_decay_period", "lr_decay_gamma",
        "max_attempts", "master_seed", "trials", "test_fraction", "stub_training",
        "output_dir", "enc_hidden", "clf_hidden", "latent_dim",
        "report_epsilon", "report_delta"};
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw std::invalid_argument("config: unknown key '" + key + "'");

    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    get("classes", c.synthetic.classes);
    get("per_class", c.synthetic.per_class);
    get("spread", c.synthetic.spread);
    get("feature_dim", c.synthetic.feature_dim);
    get("idx_images", c.idx_images);
    get("idx_labels", c.idx_labels);
    if (j.contains("scheme")) c.scheme = parse_scheme(j.at("scheme").get<std::string>());
    get("K", c.K);
    get("k", c.k);
    get("beta", c.beta);
    get("T", c.T);
    get("T_p", c.T_p);
    get("local_epochs", c.local_epochs);
    get("batch_size", c.batch_size);
    get("lambda", c.lambda);
    get("n", c.n);
    get("alpha", c.alpha);
    get("noise_std", c.noise_std);
    get("mu_prox", c.mu_prox);
    get("lr", c.lr);
    get("lr_decay_period", c.lr_decay_period);
    get("lr_decay_gamma", c.lr_decay_gamma);
    get("max_attempts", c.max_attempts);
    get("master_seed", c.master_seed);
    get("trials", c.trials);
    get("test_fraction", c.test_fraction);
    get("stub_training", c.stub_training);
    get("output_dir", c.output_dir);
    get("enc_hidden", c.enc_hidden);
    get("clf_hidden", c.clf_hidden);
    get("latent_dim", c.latent_dim);
    get("report_epsilon", c.report_epsilon);
    get("report_delta", c.report_delta);
    c.validate();
    return c;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    nlohmann::json j;
    if (in.peek() == std::ifstream::traits_type::eof()) j = nlohmann::json::object();
    else in >> j;
    return parse_config_json(j);
}

}  // namespace feddpms
