#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace feddpms {

struct CostInputs {
    std::size_t theta = 0;   // scalar count of encoder + classifier
    std::size_t latent = 0;  // l
    std::size_t n = 0;
    std::size_t alpha = 0;
    std::size_t k = 0;
    std::size_t K = 0;
    std::size_t T = 0;
    std::size_t T_p = 0;
    std::size_t G = 0;       // raw sample size (FedMix row only)

    double nu() const { return double(k) / double(K); }
};

// Relative overhead of shipping latent means: r1 = alpha*n*l / Theta.
inline double comm_r1(std::size_t alpha, std::size_t n, std::size_t latent, std::size_t theta) {
    if (theta == 0) throw std::invalid_argument("comm_r1: theta must be > 0");
    return double(alpha) * double(n) * double(latent) / double(theta);
}

// Expected first-time decoder downloads over T - T_p secondary rounds:
// E = (1 - (1-nu)^(T-T_p)) * k / nu.
inline double expected_downloads(double nu, std::size_t k, std::size_t T, std::size_t T_p) {
    if (nu <= 0.0 || nu > 1.0) throw std::invalid_argument("expected_downloads: nu in (0,1] required");
    if (T_p > T) throw std::invalid_argument("expected_downloads: T_p > T");
    return (1.0 - std::pow(1.0 - nu, double(T - T_p))) * double(k) / nu;
}

// Decoder up/down traffic relative to the 2*k*Theta*T baseline:
// r2 = (1 - (1-nu)^(T-T_p)) / (2*nu*T).
inline double comm_r2(double nu, std::size_t T, std::size_t T_p) {
    if (nu <= 0.0 || nu > 1.0) throw std::invalid_argument("comm_r2: nu in (0,1] required");
    if (T == 0 || T_p > T) throw std::invalid_argument("comm_r2: invalid T/T_p");
    return (1.0 - std::pow(1.0 - nu, double(T - T_p))) / (2.0 * nu * double(T));
}

struct CostRow {
    std::string scheme;
    double comm = 1.0;
    double compute = 1.0;          // numeric, when known
    std::string compute_label;     // symbolic, when only a ratio is defined
    double memory = 1.0;
};

inline std::vector<CostRow> cost_table(const CostInputs& in) {
    const double ub = comm_r1(in.alpha, in.n, in.latent, in.theta) + comm_r2(in.nu(), in.T, in.T_p);
    const double tp_ratio = double(in.T_p) / double(in.T);
    std::vector<CostRow> rows;
    rows.push_back({"fedavg", 1.0, 1.0, "1", 1.0});
    rows.push_back({"fedprox", 1.0, 0.0, "1 + t_prox/t_avg", 2.0});
    rows.push_back({"fedmix", 1.0 + double(in.G) / double(in.theta), 1.0, "1", 1.0});
    rows.push_back({"moon", 1.0, 0.0, "1 + t_moon/t_avg", 3.0});
    rows.push_back({"feddpms", 1.0 + ub, 1.0 + tp_ratio, std::to_string(1.0 + tp_ratio), 1.0 + tp_ratio});
    return rows;
}

// Counters in parameter-count units (scalars, not bytes) so ratios against
// the 2*k*Theta*T baseline stay dimensionless.
struct TrafficCounters {
    std::size_t model_up = 0;
    std::size_t model_down = 0;
    std::size_t decoder_up = 0;
    std::size_t decoder_down = 0;
    std::size_t means_up = 0;
    std::size_t means_down = 0;
    std::size_t decoder_download_events = 0;

    std::size_t total() const {
        return model_up + model_down + decoder_up + decoder_down + means_up + means_down;
    }
};

struct CostReport {
    double r1_analytic = 0.0;
    double r1_measured = 0.0;
    double r2_analytic = 0.0;
    double r2_measured = 0.0;
    double expected_downloads_analytic = 0.0;
    double measured_download_events = 0.0;
    double ub = 0.0;
    double compute_ratio = 0.0;
    double memory_ratio = 0.0;
    double r1_rel_error = 0.0;
    double r2_rel_error = 0.0;
};

inline CostReport reconcile(const TrafficCounters& c, const CostInputs& in) {
    if (in.theta == 0 || in.T == 0) throw std::invalid_argument("reconcile: missing inputs");
    CostReport r;
    const double baseline = 2.0 * double(in.k) * double(in.theta) * double(in.T);
    r.r1_analytic = comm_r1(in.alpha, in.n, in.latent, in.theta);
    r.r2_analytic = comm_r2(in.nu(), in.T, in.T_p);
    r.expected_downloads_analytic = expected_downloads(in.nu(), in.k, in.T, in.T_p);
    r.ub = r.r1_analytic + r.r2_analytic;
    r.compute_ratio = 1.0 + double(in.T_p) / double(in.T);
    r.memory_ratio = r.compute_ratio;
    // r1 is the means traffic relative to one model exchange per client; with
    // every client assisting once (up) and benefiting once (down) this equals
    // alpha*n*l/Theta exactly.
    r.r1_measured = double(c.means_up + c.means_down) / (2.0 * double(in.K) * double(in.theta));
    // decoder downloads counted in model-size units, matching the analytic r2
    r.r2_measured = double(c.decoder_download_events) * double(in.theta) / baseline;
    r.measured_download_events = double(c.decoder_download_events);
    r.r1_rel_error = r.r1_analytic > 0.0 ? std::abs(r.r1_measured - r.r1_analytic) / r.r1_analytic : 0.0;
    r.r2_rel_error = r.r2_analytic > 0.0 ? std::abs(r.r2_measured - r.r2_analytic) / r.r2_analytic : 0.0;
    return r;
}

}  // namespace feddpms
