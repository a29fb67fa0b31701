// SPDX-License-Identifier: Apache-2.0
//
// Ground-truth 2-wave simulator. Generates the synthetic benchmark data and
// answers oracle queries (potential outcomes, true ATEs, optimal per-unit
// policies) by replaying stored exogenous noise through the true equations.
//
// Generative model (Phi = standard normal CDF):
//   C1 ~ N(0, 1)
//   A1 ~ Bern(Phi(0.4*C1 + 2*g12*C1^2))
//   C2 ~ N(0.4*C1 + 0.2*A1, 1)
//   A2 ~ Bern(Phi(0.2*A1 + 0.4*C2 + g12*A1^2 + 2*g12*C2 + g12*C1*A1/2))
//   Y  ~ N(0.4*(C1 - mu_C1) + A1*(0.2 + t11*C1)
//          + (C2 - mu_C2)*(0.4 + g21*C1) + A2*(0.2 + t21*C1 + 0.1*A1), 1)
// with mu_C1 = 0 and mu_C2 = 0.4*C1 + 0.2*A1, i.e. the centered covariate
// terms are the innovations. Under this reading the true ATEs are
// (l10, l01, l11) = (0.2, 0.2, 0.3) in every setting.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cgnf/common.hpp"
#include "cgnf/dag.hpp"
#include "cgnf/io.hpp"

namespace cgnf {

struct SimSetting {
    double theta11 = 0.0;
    double theta21 = 0.0;
    double gamma12 = 0.0;
    double gamma21 = 0.0;

    // A: no misspecification, no heterogeneity. B: outcome model misspecified
    // with heterogeneity. C: both treatment and outcome models misspecified.
    static SimSetting preset(char which) {
        switch (which) {
            case 'A': case 'a': return {0.0, 0.0, 0.0, 0.0};
            case 'B': case 'b': return {0.2, 0.2, 0.0, 0.4};
            case 'C': case 'c': return {0.2, 0.2, 0.4, 0.4};
            default: throw Error(std::string("unknown setting: ") + which);
        }
    }
};

// u_a1/u_a2 are the uniforms used for Bernoulli thresholding, so a stored
// record replays the unit exactly under any treatment assignment.
struct NoiseRecord {
    double u_c1, u_a1, u_c2, u_a2, u_y;
};

struct SimUnit {
    double c1, c2, y;
    int a1, a2;
    NoiseRecord noise;
};

namespace detail {
inline double a1_propensity(double c1, const SimSetting& s) {
    return norm_cdf(0.4 * c1 + 2.0 * s.gamma12 * c1 * c1);
}
inline double a2_propensity(double c1, int a1, double c2, const SimSetting& s) {
    const double a1d = static_cast<double>(a1);
    return norm_cdf(0.2 * a1d + 0.4 * c2 + s.gamma12 * a1d * a1d +
                    2.0 * s.gamma12 * c2 + s.gamma12 * c1 * a1d / 2.0);
}
inline double y_mean(double c1, int a1, double c2_innovation, int a2,
                     const SimSetting& s) {
    const double a1d = static_cast<double>(a1);
    const double a2d = static_cast<double>(a2);
    return 0.4 * c1 + a1d * (0.2 + s.theta11 * c1) +
           c2_innovation * (0.4 + s.gamma21 * c1) +
           a2d * (0.2 + s.theta21 * c1 + 0.1 * a1d);
}
}  // namespace detail

inline SimUnit unit_from_noise(const NoiseRecord& u, const SimSetting& s) {
    SimUnit unit;
    unit.noise = u;
    unit.c1 = u.u_c1;
    unit.a1 = u.u_a1 < detail::a1_propensity(unit.c1, s) ? 1 : 0;
    unit.c2 = 0.4 * unit.c1 + 0.2 * unit.a1 + u.u_c2;
    unit.a2 = u.u_a2 < detail::a2_propensity(unit.c1, unit.a1, unit.c2, s) ? 1 : 0;
    unit.y = detail::y_mean(unit.c1, unit.a1, u.u_c2, unit.a2, s) + u.u_y;
    return unit;
}

inline std::vector<SimUnit> simulate(const SimSetting& setting, int n,
                                     std::uint64_t seed) {
    if (n < 1) throw Error("simulate: n must be >= 1");
    Rng rng(seed);
    std::vector<SimUnit> units;
    units.reserve(n);
    for (int i = 0; i < n; ++i) {
        NoiseRecord u;
        u.u_c1 = rng.normal();
        u.u_a1 = rng.uniform();
        u.u_c2 = rng.normal();
        u.u_a2 = rng.uniform();
        u.u_y = rng.normal();
        units.push_back(unit_from_noise(u, setting));
    }
    return units;
}

// Re-propagates the stored noises with A1 := a1 and A2 := a2; all other
// mechanisms unchanged. The C2 innovation u_c2 is invariant to intervention.
inline double true_potential_outcome(const NoiseRecord& u, int a1, int a2,
                                     const SimSetting& s) {
    const double c1 = u.u_c1;
    return detail::y_mean(c1, a1, u.u_c2, a2, s) + u.u_y;
}

enum class Lambda { L10, L01, L11 };

struct McEstimate {
    double value;
    double std_error;
};

inline McEstimate true_ate(const SimSetting& setting, Lambda which, int n_mc,
                           std::uint64_t seed) {
    if (n_mc < 1) throw Error("true_ate: n_mc must be >= 1");
    int hi_a1 = 0, hi_a2 = 0, lo_a1 = 0, lo_a2 = 0;
    switch (which) {
        case Lambda::L10: hi_a1 = 1; break;
        case Lambda::L01: hi_a2 = 1; break;
        case Lambda::L11: hi_a1 = 1; hi_a2 = 1; lo_a1 = 1; break;
    }
    Rng rng(seed);
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n_mc; ++i) {
        NoiseRecord u;
        u.u_c1 = rng.normal();
        u.u_a1 = rng.uniform();
        u.u_c2 = rng.normal();
        u.u_a2 = rng.uniform();
        u.u_y = rng.normal();
        const double diff = true_potential_outcome(u, hi_a1, hi_a2, setting) -
                            true_potential_outcome(u, lo_a1, lo_a2, setting);
        sum += diff;
        sum_sq += diff * diff;
    }
    const double mean = sum / n_mc;
    const double var = n_mc > 1 ? (sum_sq - n_mc * mean * mean) / (n_mc - 1) : 0.0;
    return {mean, std::sqrt(std::max(var, 0.0) / n_mc)};
}

// Argmax over the four arms; ties broken by lexicographically smallest (a1, a2).
inline std::pair<int, int> true_optimal_policy(const NoiseRecord& u,
                                               const SimSetting& s) {
    std::pair<int, int> best{0, 0};
    double best_y = true_potential_outcome(u, 0, 0, s);
    for (int a1 = 0; a1 <= 1; ++a1)
        for (int a2 = 0; a2 <= 1; ++a2) {
            const double y = true_potential_outcome(u, a1, a2, s);
            if (y > best_y) {
                best_y = y;
                best = {a1, a2};
            }
        }
    return best;
}

inline SampleBatch to_batch(const std::vector<SimUnit>& units) {
    SampleBatch batch;
    batch.names = {"C1", "A1", "C2", "A2", "Y"};
    batch.values.resize(static_cast<int>(units.size()), 5);
    for (std::size_t i = 0; i < units.size(); ++i) {
        const auto r = static_cast<int>(i);
        batch.values(r, 0) = units[i].c1;
        batch.values(r, 1) = units[i].a1;
        batch.values(r, 2) = units[i].c2;
        batch.values(r, 3) = units[i].a2;
        batch.values(r, 4) = units[i].y;
    }
    return batch;
}

// Oracle-only sidecar, same row order as the dataset; never fed to estimators.
inline SampleBatch noise_sidecar(const std::vector<SimUnit>& units) {
    SampleBatch batch;
    batch.names = {"u_c1", "u_a1", "u_c2", "u_a2", "u_y"};
    batch.values.resize(static_cast<int>(units.size()), 5);
    for (std::size_t i = 0; i < units.size(); ++i) {
        const auto r = static_cast<int>(i);
        batch.values(r, 0) = units[i].noise.u_c1;
        batch.values(r, 1) = units[i].noise.u_a1;
        batch.values(r, 2) = units[i].noise.u_c2;
        batch.values(r, 3) = units[i].noise.u_a2;
        batch.values(r, 4) = units[i].noise.u_y;
    }
    return batch;
}

inline NoiseRecord noise_from_row(const SampleBatch& sidecar, int row) {
    return {sidecar.values(row, sidecar.column_index("u_c1")),
            sidecar.values(row, sidecar.column_index("u_a1")),
            sidecar.values(row, sidecar.column_index("u_c2")),
            sidecar.values(row, sidecar.column_index("u_a2")),
            sidecar.values(row, sidecar.column_index("u_y"))};
}

}  // namespace cgnf
