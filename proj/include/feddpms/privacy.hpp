#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "feddpms/tensor.hpp"

namespace feddpms {

// Gaussian-mechanism accounting for a bounded mean over m samples in [0,1]:
// sensitivity S_f = 1/m, noise std = S_f * sigma_mech, and the budget bound
// delta >= (4/5) exp(-(sigma_mech * epsilon)^2 / 2) with natural log.
struct DpParams {
    double epsilon = 0.0;
    double delta = 0.0;
    std::size_t m = 0;            // contributing sample count
    double sigma_mech = 0.0;      // mechanism noise multiplier
    double noise_std = 0.0;       // actual added standard deviation = sigma_mech / m
    bool degenerate = false;      // delta >= 4/5, bound carries no information
};

inline double sensitivity(std::size_t m) {
    if (m == 0) throw std::invalid_argument("sensitivity: m must be >= 1");
    return 1.0 / double(m);
}

// Minimal sigma with sigma > sqrt(2 ln(4/(5 delta))) / epsilon.
inline double calibrate_sigma(double epsilon, double delta, bool* degenerate = nullptr) {
    if (epsilon <= 0.0) throw std::invalid_argument("calibrate_sigma: epsilon must be > 0");
    if (delta <= 0.0 || delta >= 1.0) throw std::invalid_argument("calibrate_sigma: delta must be in (0,1)");
    if (degenerate) *degenerate = false;
    if (delta >= 0.8) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    return std::sqrt(2.0 * std::log(4.0 / (5.0 * delta))) / epsilon;
}

inline double delta_for(double sigma_mech, double epsilon) {
    if (sigma_mech < 0.0) throw std::invalid_argument("delta_for: sigma must be >= 0");
    if (epsilon <= 0.0) throw std::invalid_argument("delta_for: epsilon must be > 0");
    return 0.8 * std::exp(-(sigma_mech * epsilon) * (sigma_mech * epsilon) / 2.0);
}

// z_tilde = z_bar + N(0, noise_std^2) per coordinate. No clamping; downstream
// filtering decides whether the perturbed mean is usable.
inline Tensor perturb_mean(const Tensor& zbar, double noise_std, std::mt19937_64& rng) {
    if (noise_std < 0.0) throw std::invalid_argument("perturb_mean: negative noise std");
    for (double v : zbar.data)
        if (v < 0.0 || v > 1.0) throw std::invalid_argument("perturb_mean: mean outside [0,1]");
    Tensor out = zbar;
    if (noise_std == 0.0) return out;
    std::normal_distribution<double> noise(0.0, noise_std);
    for (auto& v : out.data) v += noise(rng);
    return out;
}

// Per-class privacy accounting from a run's actual noise level and sample
// counts: sigma_mech = noise_std * m, then delta at the configured epsilon
// and minimal epsilon at the configured delta.
struct ClassBudget {
    int class_label = 0;
    std::size_t m = 0;
    double noise_std = 0.0;
    double sigma_mech = 0.0;
    double epsilon = 0.0;   // reporting epsilon
    double delta = 0.0;     // implied delta at that epsilon
    double epsilon_min = 0.0;  // minimal epsilon at the configured delta
};

inline ClassBudget budget_report(int class_label, std::size_t m, double noise_std,
                                 double at_epsilon, double at_delta, std::size_t m_floor = 2) {
    if (m < m_floor)
        throw std::invalid_argument("budget_report: class too small for a privacy claim (m < floor)");
    ClassBudget b;
    b.class_label = class_label;
    b.m = m;
    b.noise_std = noise_std;
    b.sigma_mech = noise_std * double(m);
    b.epsilon = at_epsilon;
    b.delta = delta_for(b.sigma_mech, at_epsilon);
    // minimal epsilon achieving at_delta: epsilon = sqrt(2 ln(4/(5 delta))) / sigma
    if (b.sigma_mech > 0.0 && at_delta < 0.8)
        b.epsilon_min = std::sqrt(2.0 * std::log(4.0 / (5.0 * at_delta))) / b.sigma_mech;
    else
        b.epsilon_min = 0.0;
    return b;
}

}  // namespace feddpms
