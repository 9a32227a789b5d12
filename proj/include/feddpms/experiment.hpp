#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "feddpms/config.hpp"
#include "feddpms/idx.hpp"

namespace feddpms {

// CSV schema, one row per round:
//   round,scheme,test_accuracy,per_client_train_loss,shared_count,benefited_count,bytes_up,bytes_down
// per_client_train_loss packs "id:loss" pairs joined by '|'. Byte columns are
// scalar traffic units times sizeof(double).
inline constexpr const char* kMetricsCsvHeader =
    "round,scheme,test_accuracy,per_client_train_loss,shared_count,benefited_count,bytes_up,bytes_down";

inline std::uint64_t partition_hash(const std::vector<Dataset>& parts) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    auto mixin = [&](std::uint64_t v) {
        h ^= v;
        h *= 1099511628211ULL;
    };
    for (const auto& p : parts) {
        mixin(p.size());
        for (const auto& c : p.class_counts()) mixin(c);
    }
    return h;
}

struct PreparedData {
    Dataset train;
    Dataset test;
    std::vector<Dataset> partitions;
    std::uint64_t hash = 0;
};

inline PreparedData prepare_data(const ExperimentConfig& cfg, std::uint64_t seed) {
    PreparedData d;
    if (cfg.uses_idx()) {
        d.train = load_idx(cfg.idx_images, cfg.idx_labels);
    } else {
        d.train = make_synthetic_source(cfg.synthetic.classes, cfg.synthetic.per_class,
                                        cfg.synthetic.spread, cfg.synthetic.feature_dim,
                                        cfg.partition_seed(seed));
    }
    d.test = train_test_split(d.train, cfg.test_fraction, cfg.partition_seed(seed));
    PartitionSpec spec{cfg.K, cfg.beta, cfg.partition_seed(seed)};
    d.partitions = dirichlet_partition(d.train, spec);
    d.hash = partition_hash(d.partitions);
    return d;
}

struct TrialResult {
    std::uint64_t seed = 0;
    std::uint64_t partition_hash = 0;
    RunResult run;
};

struct RunMetrics {
    std::vector<TrialResult> trials;
    double mean_final_accuracy = 0.0;
    double best_accuracy = 0.0;
};

inline RunMetrics run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    RunMetrics m;
    for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
        const std::uint64_t seed = cfg.master_seed + trial;
        PreparedData data = prepare_data(cfg, seed);
        const std::size_t input_dim = data.train.samples.at(0).features.size();
        VaeArch arch = cfg.arch(input_dim, data.train.class_count);
        RunResult run = run_scheme(cfg.scheme, arch, data.partitions, data.test, cfg.protocol(seed));
        for (const auto& r : run.rounds) m.best_accuracy = std::max(m.best_accuracy, r.accuracy);
        m.mean_final_accuracy += run.final_accuracy;
        m.trials.push_back({seed, data.hash, std::move(run)});
    }
    m.mean_final_accuracy /= double(cfg.trials);
    return m;
}

inline void write_metrics_csv(std::ostream& out, const std::vector<RoundRecord>& rounds) {
    out << kMetricsCsvHeader << "\n";
    out << std::setprecision(17);
    for (const auto& r : rounds) {
        std::ostringstream losses;
        for (std::size_t i = 0; i < r.client_losses.size(); ++i) {
            if (i) losses << "|";
            losses << r.client_losses[i].first << ":" << r.client_losses[i].second;
        }
        out << r.round << "," << r.scheme << "," << r.accuracy << "," << losses.str() << ","
            << r.shared_count << "," << r.benefited_count << "," << r.scalars_up * sizeof(double)
            << "," << r.scalars_down * sizeof(double) << "\n";
    }
}

inline CostInputs cost_inputs_for(const ExperimentConfig& cfg, const VaeArch& arch,
                                  std::uint64_t seed) {
    auto rng = make_stream(seed, std::uint64_t(StreamKind::init));
    CostInputs in;
    in.theta = init_encoder(arch, rng).scalar_count() + init_classifier(arch, rng).scalar_count();
    in.latent = arch.latent_dim;
    in.n = cfg.n;
    in.alpha = cfg.alpha;
    in.k = cfg.k;
    in.K = cfg.K;
    in.T = cfg.T;
    in.T_p = cfg.T_p;
    in.G = arch.input_dim;
    return in;
}

inline nlohmann::json cost_report_json(const CostReport& r) {
    return {{"r1_analytic", r.r1_analytic},
            {"r1_measured", r.r1_measured},
            {"r1_rel_error", r.r1_rel_error},
            {"r2_analytic", r.r2_analytic},
            {"r2_measured", r.r2_measured},
            {"r2_rel_error", r.r2_rel_error},
            {"expected_downloads", r.expected_downloads_analytic},
            {"measured_download_events", r.measured_download_events},
            {"ub", r.ub},
            {"compute_ratio", r.compute_ratio},
            {"memory_ratio", r.memory_ratio}};
}

inline nlohmann::json budget_json(const ClassBudget& b) {
    return {{"class", b.class_label}, {"m", b.m},          {"noise_std", b.noise_std},
            {"sigma_mech", b.sigma_mech}, {"epsilon", b.epsilon}, {"delta", b.delta},
            {"epsilon_min", b.epsilon_min}};
}

// Per-client DP budget for the classes DPMS would share, computed from the
// partition alone (no training required).
inline nlohmann::json dp_budget_report(const ExperimentConfig& cfg) {
    PreparedData data = prepare_data(cfg, cfg.master_seed);
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t i = 0; i < data.partitions.size(); ++i) {
        const auto& part = data.partitions[i];
        if (part.samples.empty()) continue;
        ClassProfile prof = class_profile(part, cfg.n);
        const auto counts = part.class_counts();
        nlohmann::json client = {{"client", i}, {"degenerate", prof.degenerate},
                                 {"budgets", nlohmann::json::array()}};
        for (int c : prof.abundant) {
            const std::size_t m = counts[std::size_t(c)];
            if (m < 2) {
                client["budgets"].push_back({{"class", c}, {"m", m}, {"error", "class too small for a privacy claim"}});
                continue;
            }
            client["budgets"].push_back(
                budget_json(budget_report(c, m, cfg.noise_std, cfg.report_epsilon, cfg.report_delta)));
        }
        out.push_back(std::move(client));
    }
    return out;
}

inline nlohmann::json summary_json(const ExperimentConfig& cfg, const RunMetrics& m) {
    nlohmann::json trials = nlohmann::json::array();
    for (const auto& t : m.trials) {
        nlohmann::json warnings = nlohmann::json::array();
        for (const auto& r : t.run.rounds)
            for (const auto& w : r.warnings)
                warnings.push_back({{"round", r.round}, {"client", w.client}, {"class", w.class_label},
                                    {"accepted", w.accepted}, {"quota", w.quota}});
        trials.push_back({{"seed", t.seed},
                          {"partition_hash", t.partition_hash},
                          {"final_accuracy", t.run.final_accuracy},
                          {"partial_quota_warnings", warnings}});
    }
    nlohmann::json j = {{"scheme", scheme_name(cfg.scheme)},
                        {"beta", cfg.beta},
                        {"mean_final_accuracy", m.mean_final_accuracy},
                        {"best_accuracy", m.best_accuracy},
                        {"trials", trials}};
    if (cfg.scheme == Scheme::feddpms && !m.trials.empty()) {
        const auto& t0 = m.trials.front();
        VaeArch arch = cfg.arch(t0.run.server.arch.input_dim, t0.run.server.arch.class_count);
        CostInputs in = cost_inputs_for(cfg, arch, t0.seed);
        j["cost_report"] = cost_report_json(reconcile(t0.run.traffic, in));
    }
    return j;
}

inline void write_outputs(const ExperimentConfig& cfg, const RunMetrics& m) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    for (const auto& t : m.trials) {
        std::ostringstream name;
        name << scheme_name(cfg.scheme) << "_seed" << t.seed << ".csv";
        std::ofstream csv(fs::path(cfg.output_dir) / name.str());
        write_metrics_csv(csv, t.run.rounds);
    }
    std::ofstream js(fs::path(cfg.output_dir) / (scheme_name(cfg.scheme) + "_summary.json"));
    js << summary_json(cfg, m).dump(2) << "\n";
}

}  // namespace feddpms
