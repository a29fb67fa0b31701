// SPDX-License-Identifier: Apache-2.0
//
// Interventional and counterfactual inference over a FlowModel: mutilation
// sampling, Monte-Carlo ATE contrasts with common random numbers,
// abduction-action-prediction, per-unit optimal policies, and potential
// outcome surfaces over base-noise grids.

#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cgnf/common.hpp"
#include "cgnf/dequant.hpp"
#include "cgnf/flow.hpp"
#include "cgnf/io.hpp"

namespace cgnf {

// Partial assignment {node := value}; discrete nodes take the class label.
struct InterventionSpec {
    std::vector<std::pair<std::string, double>> assignments;

    bool empty() const { return assignments.empty(); }

    // "A1=1,A2=0" -> assignments in the given order.
    static InterventionSpec parse(const std::string& text) {
        InterventionSpec spec;
        std::size_t pos = 0;
        while (pos < text.size()) {
            auto comma = text.find(',', pos);
            const std::string item =
                text.substr(pos, comma == std::string::npos ? comma : comma - pos);
            auto eq = item.find('=');
            if (eq == std::string::npos)
                throw Error("intervention must be name=value: " + item);
            spec.assignments.emplace_back(item.substr(0, eq),
                                          std::stod(item.substr(eq + 1)));
            pos = comma == std::string::npos ? text.size() : comma + 1;
        }
        return spec;
    }
};

namespace detail {
// Standardized per-node clamp values; validates node names and labels.
inline std::vector<std::optional<double>> clamps_for(const FlowModel& model,
                                                     const InterventionSpec& spec) {
    std::vector<std::optional<double>> clamps(model.dag().size());
    for (const auto& [name, value] : spec.assignments) {
        const int idx = model.dag().index_of(name);
        const NodeSpec& node = model.dag().node(idx);
        if (node.kind == NodeKind::Discrete) {
            const int label = static_cast<int>(std::llround(value));
            if (std::abs(value - label) > 1e-9 || label < 0 || label >= node.n_classes)
                throw LabelOutOfRange("intervention on " + name +
                                      ": invalid class label " + std::to_string(value));
        }
        clamps[idx] = model.raw_to_std(idx, value);
    }
    return clamps;
}

// Generative pass for fixed base draws: inverse flow with clamps,
// de-standardize, force intervened columns to their exact raw values, and
// quantize discrete columns.
inline SampleBatch generate_from_noise(const FlowModel& model,
                                       const Eigen::MatrixXd& Z,
                                       const InterventionSpec& spec) {
    auto clamps = clamps_for(model, spec);
    Eigen::MatrixXd raw = model.destandardize(model.inverse_batch(Z, clamps));
    for (const auto& [name, value] : spec.assignments)
        raw.col(model.dag().index_of(name)).setConstant(value);
    for (int j = 0; j < model.dag().size(); ++j) {
        const NodeSpec& node = model.dag().node(j);
        if (node.kind != NodeKind::Discrete) continue;
        DequantSpec dq{node.n_classes, 1.0 / 36.0};
        for (int r = 0; r < raw.rows(); ++r)
            raw(r, j) = quantize_one(raw(r, j), dq);
    }
    SampleBatch batch;
    for (const auto& node : model.dag().nodes()) batch.names.push_back(node.name);
    batch.values = std::move(raw);
    return batch;
}

inline Eigen::MatrixXd draw_base_noise(const FlowModel& model, int n_mc,
                                       std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd Z(n_mc, model.dag().size());
    for (int r = 0; r < n_mc; ++r)
        for (int j = 0; j < model.dag().size(); ++j) Z(r, j) = rng.normal();
    return Z;
}
}  // namespace detail

inline SampleBatch sample_interventional(const FlowModel& model,
                                         const InterventionSpec& spec, int n_mc,
                                         std::uint64_t seed) {
    if (n_mc < 1) throw Error("sample_interventional: n_mc must be >= 1");
    return detail::generate_from_noise(model, detail::draw_base_noise(model, n_mc, seed),
                                       spec);
}

// Contrasts of interventional outcome means. The same base draws are reused
// across every arm (common random numbers), so the contrast of an arm with
// itself is exactly zero.
inline std::vector<double> estimate_contrasts(
    const FlowModel& model,
    const std::vector<std::pair<InterventionSpec, InterventionSpec>>& pairs,
    const std::string& outcome, int n_mc, std::uint64_t seed) {
    Eigen::MatrixXd Z = detail::draw_base_noise(model, n_mc, seed);
    const int y_idx = model.dag().index_of(outcome);
    auto arm_mean = [&](const InterventionSpec& spec) {
        return detail::generate_from_noise(model, Z, spec).values.col(y_idx).mean();
    };
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& [hi, lo] : pairs) out.push_back(arm_mean(hi) - arm_mean(lo));
    return out;
}

struct AteEstimate {
    double l10 = 0.0, l01 = 0.0, l11 = 0.0;
};

// The paper's three contrasts over (A1, A2) with common random numbers.
inline AteEstimate estimate_ate(const FlowModel& model, int n_mc = 2000,
                                std::uint64_t seed = 0,
                                const std::string& a1_name = "A1",
                                const std::string& a2_name = "A2",
                                const std::string& outcome = "Y") {
    Eigen::MatrixXd Z = detail::draw_base_noise(model, n_mc, seed);
    const int y_idx = model.dag().index_of(outcome);
    double mean[2][2];
    for (int a1 = 0; a1 <= 1; ++a1)
        for (int a2 = 0; a2 <= 1; ++a2) {
            InterventionSpec spec;
            spec.assignments = {{a1_name, static_cast<double>(a1)},
                                {a2_name, static_cast<double>(a2)}};
            mean[a1][a2] =
                detail::generate_from_noise(model, Z, spec).values.col(y_idx).mean();
        }
    return {mean[1][0] - mean[0][0], mean[0][1] - mean[0][0], mean[1][1] - mean[1][0]};
}

struct CounterfactualResult {
    Eigen::VectorXd z;                              // abducted base noise
    std::map<std::pair<int, int>, double> outcomes;  // per-arm potential Y
    std::pair<int, int> policy;                      // argmax, lexicographic ties
};

// Abduction-action-prediction for one observed unit. Discrete coordinates of
// x_raw are class labels (the dequantization-kernel means), so abduction is
// deterministic per unit.
inline CounterfactualResult counterfactual(
    const FlowModel& model, const Eigen::VectorXd& x_raw,
    const std::vector<std::pair<int, int>>& arms = {{0, 0}, {0, 1}, {1, 0}, {1, 1}},
    const std::string& a1_name = "A1", const std::string& a2_name = "A2",
    const std::string& outcome = "Y") {
    if (x_raw.size() != model.dag().size())
        throw ShapeMismatch("counterfactual: unit length != DAG size");
    const int y_idx = model.dag().index_of(outcome);
    Eigen::VectorXd x_std(x_raw.size());
    for (int j = 0; j < x_raw.size(); ++j) x_std[j] = model.raw_to_std(j, x_raw[j]);

    CounterfactualResult result;
    result.z = model.transform_forward(x_std).z;  // abduction
    for (const auto& [a1, a2] : arms) {
        InterventionSpec spec;
        spec.assignments = {{a1_name, static_cast<double>(a1)},
                            {a2_name, static_cast<double>(a2)}};
        auto clamps = detail::clamps_for(model, spec);  // action
        Eigen::VectorXd x_cf = model.transform_inverse(result.z, clamps);  // prediction
        result.outcomes[{a1, a2}] = model.std_to_raw(y_idx, x_cf[y_idx]);
    }
    result.policy = result.outcomes.begin()->first;
    double best = result.outcomes.begin()->second;
    for (const auto& [arm, y] : result.outcomes) {
        if (y > best) {  // map iterates arms in ascending order: ties keep smallest
            best = y;
            result.policy = arm;
        }
    }
    return result;
}

struct GridSpec {
    double lo = -3.0, hi = 3.0;
    int n = 61;

    // "lo:hi:n"
    static GridSpec parse(const std::string& text) {
        GridSpec g;
        const auto c1 = text.find(':');
        const auto c2 = text.find(':', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw Error("grid must be lo:hi:n, got " + text);
        g.lo = std::stod(text.substr(0, c1));
        g.hi = std::stod(text.substr(c1 + 1, c2 - c1 - 1));
        g.n = std::stoi(text.substr(c2 + 1));
        if (g.n < 1) throw Error("grid needs at least one point");
        return g;
    }

    double at(int k) const {
        return n == 1 ? lo : lo + k * (hi - lo) / (n - 1);
    }
};

// Potential-outcome surface over base-noise coordinates (z_C1, z_C2) with
// z_Y = 0 and treatment noise irrelevant under clamping. Returns rows
// (z_c1, z_c2, a1, a2, y).
inline Eigen::MatrixXd potential_outcome_surface(
    const FlowModel& model, const GridSpec& grid, int a1, int a2,
    const std::string& c1_name = "C1", const std::string& c2_name = "C2",
    const std::string& a1_name = "A1", const std::string& a2_name = "A2",
    const std::string& outcome = "Y") {
    const int d = model.dag().size();
    const int c1_idx = model.dag().index_of(c1_name);
    const int c2_idx = model.dag().index_of(c2_name);
    const int y_idx = model.dag().index_of(outcome);
    InterventionSpec spec;
    spec.assignments = {{a1_name, static_cast<double>(a1)},
                        {a2_name, static_cast<double>(a2)}};
    auto clamps = detail::clamps_for(model, spec);

    const int rows = grid.n * grid.n;
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(rows, d);
    for (int i = 0; i < grid.n; ++i)
        for (int j = 0; j < grid.n; ++j) {
            Z(i * grid.n + j, c1_idx) = grid.at(i);
            Z(i * grid.n + j, c2_idx) = grid.at(j);
        }
    Eigen::MatrixXd X = model.inverse_batch(Z, clamps);
    Eigen::MatrixXd out(rows, 5);
    for (int r = 0; r < rows; ++r) {
        out(r, 0) = Z(r, c1_idx);
        out(r, 1) = Z(r, c2_idx);
        out(r, 2) = a1;
        out(r, 3) = a2;
        out(r, 4) = model.std_to_raw(y_idx, X(r, y_idx));
    }
    return out;
}

}  // namespace cgnf
