// SPDX-License-Identifier: Apache-2.0
//
// Brute-force g-computation on small all-discrete SCMs: sums the truncated
// factorization over every non-intervened configuration, replacing intervened
// factors by indicators (realized by pinning those nodes). Serves as an
// independent cross-check of the flow's intervention machinery.

#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "cgnf/common.hpp"
#include "cgnf/dag.hpp"
#include "cgnf/io.hpp"
#include "cgnf/scm_sim.hpp"

namespace cgnf {

struct DiscreteSCM {
    CausalDAG dag;
    // Per node: rows = parent configurations (row-major in ascending parent
    // index order, first parent slowest), cols = classes; rows sum to 1.
    std::vector<Eigen::MatrixXd> cpt;

    int parent_config_count(int i) const {
        int count = 1;
        for (int p : dag.parents(i)) count *= dag.node(p).n_classes;
        return count;
    }

    int parent_config_index(int i, const std::vector<int>& state) const {
        int idx = 0;
        for (int p : dag.parents(i)) idx = idx * dag.node(p).n_classes + state[p];
        return idx;
    }

    void validate() const {
        const int d = dag.size();
        if (static_cast<int>(cpt.size()) != d)
            throw ShapeMismatch("DiscreteSCM: one table per node required");
        for (int i = 0; i < d; ++i) {
            if (dag.node(i).kind != NodeKind::Discrete)
                throw Error("DiscreteSCM: node " + dag.node(i).name + " is not discrete");
            if (cpt[i].rows() != parent_config_count(i) ||
                cpt[i].cols() != dag.node(i).n_classes)
                throw ShapeMismatch("DiscreteSCM: table shape mismatch for " +
                                    dag.node(i).name);
            for (int r = 0; r < cpt[i].rows(); ++r) {
                if (cpt[i].row(r).minCoeff() < 0.0)
                    throw Error("DiscreteSCM: negative probability");
                if (std::abs(cpt[i].row(r).sum() - 1.0) > 1e-12)
                    throw Error("DiscreteSCM: table row of " + dag.node(i).name +
                                " does not sum to 1");
            }
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json tables;
        for (int i = 0; i < dag.size(); ++i) {
            std::vector<double> flat(cpt[i].size());
            for (int r = 0; r < cpt[i].rows(); ++r)
                for (int c = 0; c < cpt[i].cols(); ++c)
                    flat[r * cpt[i].cols() + c] = cpt[i](r, c);
            tables[dag.node(i).name] = flat;
        }
        return {{"dag", dag.to_json()}, {"cpt", tables}};
    }

    static DiscreteSCM from_json(const nlohmann::json& j) {
        DiscreteSCM scm;
        scm.dag = CausalDAG::from_json(j.at("dag"));
        scm.cpt.resize(scm.dag.size());
        for (int i = 0; i < scm.dag.size(); ++i) {
            auto flat = j.at("cpt").at(scm.dag.node(i).name).get<std::vector<double>>();
            const int rows = scm.parent_config_count(i);
            const int cols = scm.dag.node(i).n_classes;
            if (static_cast<int>(flat.size()) != rows * cols)
                throw IoError("DiscreteSCM: flattened table size mismatch");
            scm.cpt[i].resize(rows, cols);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) scm.cpt[i](r, c) = flat[r * cols + c];
        }
        scm.validate();
        return scm;
    }
};

constexpr long long kMaxEnumerationStates = 10'000'000;

// P(target | do(spec)) by exhaustive enumeration. Intervened nodes are pinned
// (their factor is the indicator); everything else contributes its
// conditional probability. Recursion follows topological order so zero-mass
// branches prune early.
inline Eigen::VectorXd interventional_distribution(
    const DiscreteSCM& scm, const std::map<std::string, int>& interventions,
    const std::string& target) {
    const int d = scm.dag.size();
    long long states = 1;
    for (int i = 0; i < d; ++i) {
        states *= scm.dag.node(i).n_classes;
        if (states > kMaxEnumerationStates)
            throw StateSpaceTooLarge("joint state space exceeds 1e7");
    }
    std::vector<int> pinned(d, -1);
    for (const auto& [name, value] : interventions) {
        const int idx = scm.dag.index_of(name);
        if (value < 0 || value >= scm.dag.node(idx).n_classes)
            throw LabelOutOfRange("intervention value out of range for " + name);
        pinned[idx] = value;
    }
    const int target_idx = scm.dag.index_of(target);
    Eigen::VectorXd dist = Eigen::VectorXd::Zero(scm.dag.node(target_idx).n_classes);
    const auto& topo = scm.dag.topological_order();
    std::vector<int> state(d, 0);

    auto dfs = [&](auto&& self, int depth, double prob) -> void {
        if (depth == d) {
            dist[state[target_idx]] += prob;
            return;
        }
        const int node = topo[depth];
        if (pinned[node] >= 0) {
            state[node] = pinned[node];
            self(self, depth + 1, prob);
            return;
        }
        const int row = scm.parent_config_index(node, state);
        for (int v = 0; v < scm.dag.node(node).n_classes; ++v) {
            const double p = scm.cpt[node](row, v);
            if (p <= 0.0) continue;
            state[node] = v;
            self(self, depth + 1, prob * p);
        }
        state[node] = 0;
    };
    dfs(dfs, 0, 1.0);
    return dist;
}

// Expectation contrast E[target | do(arm_a)] - E[target | do(arm_b)] with the
// target numerically coded by its class index.
inline double ate_oracle(const DiscreteSCM& scm,
                         const std::map<std::string, int>& arm_a,
                         const std::map<std::string, int>& arm_b,
                         const std::string& target) {
    auto expectation = [&](const std::map<std::string, int>& arm) {
        Eigen::VectorXd dist = interventional_distribution(scm, arm, target);
        double e = 0.0;
        for (int v = 0; v < dist.size(); ++v) e += v * dist[v];
        return e;
    };
    return expectation(arm_a) - expectation(arm_b);
}

// Ancestral (mutilation) sampling; intervened nodes are set, others drawn
// from their conditional tables.
inline std::vector<std::vector<int>> sample_discrete_scm(
    const DiscreteSCM& scm, int n, std::uint64_t seed,
    const std::map<std::string, int>& interventions = {}) {
    const int d = scm.dag.size();
    std::vector<int> pinned(d, -1);
    for (const auto& [name, value] : interventions)
        pinned[scm.dag.index_of(name)] = value;
    Rng rng(seed);
    std::vector<std::vector<int>> samples(n, std::vector<int>(d, 0));
    for (int s = 0; s < n; ++s) {
        auto& state = samples[s];
        for (int node : scm.dag.topological_order()) {
            if (pinned[node] >= 0) {
                state[node] = pinned[node];
                continue;
            }
            const int row = scm.parent_config_index(node, state);
            const double u = rng.uniform();
            double acc = 0.0;
            int value = scm.dag.node(node).n_classes - 1;
            for (int v = 0; v < scm.dag.node(node).n_classes; ++v) {
                acc += scm.cpt[node](row, v);
                if (u < acc) {
                    value = v;
                    break;
                }
            }
            state[node] = value;
        }
    }
    return samples;
}

inline SampleBatch discrete_samples_to_batch(const DiscreteSCM& scm,
                                             const std::vector<std::vector<int>>& samples) {
    SampleBatch batch;
    for (const auto& node : scm.dag.nodes()) batch.names.push_back(node.name);
    batch.values.resize(static_cast<int>(samples.size()), scm.dag.size());
    for (std::size_t r = 0; r < samples.size(); ++r)
        for (int j = 0; j < scm.dag.size(); ++j)
            batch.values(static_cast<int>(r), j) = samples[r][j];
    return batch;
}

// Binarized 2-wave fixture: thresholds the continuous columns of a setting-A
// simulation at their sample medians and estimates the conditional tables by
// smoothed frequency counts. Links the oracle to the main benchmark.
inline DiscreteSCM binarized_two_wave_fixture(int n = 20000, std::uint64_t seed = 7) {
    auto units = simulate(SimSetting::preset('A'), n, seed);
    auto median_of = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    std::vector<double> c1(n), c2(n), y(n);
    for (int i = 0; i < n; ++i) {
        c1[i] = units[i].c1;
        c2[i] = units[i].c2;
        y[i] = units[i].y;
    }
    const double mc1 = median_of(c1), mc2 = median_of(c2), my = median_of(y);

    CausalDAG dag({NodeSpec::discrete("C1", 2), NodeSpec::discrete("A1", 2),
                   NodeSpec::discrete("C2", 2), NodeSpec::discrete("A2", 2),
                   NodeSpec::discrete("Y", 2)},
                  {{"C1", "A1"}, {"C1", "C2"}, {"C1", "Y"},
                   {"A1", "C2"}, {"A1", "A2"}, {"A1", "Y"},
                   {"C2", "A2"}, {"C2", "Y"},
                   {"A2", "Y"}});
    dag.validate();

    DiscreteSCM scm;
    scm.dag = dag;
    scm.cpt.resize(5);
    std::vector<Eigen::MatrixXd> counts(5);
    for (int i = 0; i < 5; ++i)
        counts[i] = Eigen::MatrixXd::Constant(scm.parent_config_count(i), 2, 0.5);

    std::vector<int> state(5);
    for (int r = 0; r < n; ++r) {
        state[0] = c1[r] > mc1 ? 1 : 0;
        state[1] = units[r].a1;
        state[2] = c2[r] > mc2 ? 1 : 0;
        state[3] = units[r].a2;
        state[4] = y[r] > my ? 1 : 0;
        for (int i = 0; i < 5; ++i)
            counts[i](scm.parent_config_index(i, state), state[i]) += 1.0;
    }
    for (int i = 0; i < 5; ++i) {
        scm.cpt[i].resize(counts[i].rows(), 2);
        for (int r = 0; r < counts[i].rows(); ++r)
            scm.cpt[i].row(r) = counts[i].row(r) / counts[i].row(r).sum();
    }
    scm.validate();
    return scm;
}

}  // namespace cgnf
