// SPDX-License-Identifier: Apache-2.0
//
// Experiment harness reproducing the benchmark protocol: simulate -> train ->
// estimate -> report, plus policy evaluation against the ground-truth SCM and
// potential-outcome surface export. Reports are canonical JSON (sorted keys)
// with CSV mirrors; cell seeds derive from the master seed so cells are
// decoupled and reruns are byte-identical.

#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "cgnf/baselines.hpp"
#include "cgnf/causal.hpp"
#include "cgnf/common.hpp"
#include "cgnf/flow.hpp"
#include "cgnf/gcomp_oracle.hpp"
#include "cgnf/io.hpp"
#include "cgnf/scm_sim.hpp"

namespace cgnf {

enum class EstimatorKind { Cgnf, Ipw, Rwr, Gcom, GcomTheta };

inline const std::vector<EstimatorKind>& all_estimators() {
    static const std::vector<EstimatorKind> all{
        EstimatorKind::Cgnf, EstimatorKind::Ipw, EstimatorKind::Rwr,
        EstimatorKind::Gcom, EstimatorKind::GcomTheta};
    return all;
}

inline std::string estimator_name(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::Cgnf: return "cgnf";
        case EstimatorKind::Ipw: return "ipw";
        case EstimatorKind::Rwr: return "rwr";
        case EstimatorKind::Gcom: return "gcom";
        case EstimatorKind::GcomTheta: return "gcom_theta";
    }
    return "?";
}

inline std::vector<EstimatorKind> parse_estimators(const std::string& text) {
    if (text == "all" || text.empty()) return all_estimators();
    std::vector<EstimatorKind> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto comma = text.find(',', pos);
        const std::string name =
            text.substr(pos, comma == std::string::npos ? comma : comma - pos);
        bool found = false;
        for (EstimatorKind kind : all_estimators())
            if (estimator_name(kind) == name) {
                out.push_back(kind);
                found = true;
            }
        if (!found) throw Error("unknown estimator: " + name);
        pos = comma == std::string::npos ? text.size() : comma + 1;
    }
    return out;
}

struct BenchmarkConfig {
    std::vector<char> settings{'a'};
    std::vector<int> sizes{500, 2000};
    int seeds = 5;
    std::vector<EstimatorKind> estimators = all_estimators();
    TrainConfig train;
    int mc_samples = 2000;
    std::uint64_t master_seed = 1;
    std::string out_dir;
    int jobs = 1;
};

struct BenchmarkCell {
    char setting;
    int size;
    int seed_index;
    std::uint64_t seed;
    std::map<std::string, AteTriple> estimates;
};

struct SummaryRow {
    std::string setting;
    int size;
    std::string estimator;
    std::string lambda;
    std::vector<double> estimates;
    double mean, stddev, truth;
    bool zero_in_band, sign_correct;
};

struct BenchmarkReport {
    BenchmarkConfig config;
    std::vector<BenchmarkCell> cells;
    std::vector<SummaryRow> summary;
};

namespace detail {

inline AteTriple run_estimator(EstimatorKind kind, const SampleBatch& data,
                               const CausalDAG& dag, const TrainConfig& base_train,
                               int mc_samples, std::uint64_t cell_seed) {
    switch (kind) {
        case EstimatorKind::Ipw: return ipw_estimate(data);
        case EstimatorKind::Rwr: return rwr_estimate(data);
        case EstimatorKind::Gcom: return gcom_estimate(data, false);
        case EstimatorKind::GcomTheta: return gcom_estimate(data, true);
        case EstimatorKind::Cgnf: {
            TrainConfig cfg = base_train;
            cfg.seed = derive_seed(cell_seed, "train");
            FlowModel model = fit(dag, data, cfg).first;
            AteEstimate e = estimate_ate(model, mc_samples, derive_seed(cell_seed, "mc"));
            return {e.l10, e.l01, e.l11};
        }
    }
    throw Error("unreachable estimator kind");
}

inline nlohmann::json cell_to_json(const BenchmarkCell& cell) {
    nlohmann::json je;
    for (const auto& [name, est] : cell.estimates)
        je[name] = {{"l10", est.l10}, {"l01", est.l01}, {"l11", est.l11}};
    return {{"setting", std::string(1, cell.setting)},
            {"size", cell.size},
            {"seed_index", cell.seed_index},
            {"seed", cell.seed},
            {"estimates", je}};
}

}  // namespace detail

// Runs every (setting, size, seed) cell, optionally in a worker pool (each
// cell itself stays single-threaded), and writes report.json / report.csv
// plus per-cell flush files under cells/.
inline BenchmarkReport run_benchmark(const BenchmarkConfig& config) {
    if (config.seeds < 1) throw Error("benchmark: seeds must be >= 1");
    for (int size : config.sizes)
        if (size < 100) throw Error("benchmark: sizes must be >= 100");
    namespace fs = std::filesystem;
    const bool writing = !config.out_dir.empty();
    if (writing) fs::create_directories(fs::path(config.out_dir) / "cells");

    CausalDAG dag = two_wave_dag();
    std::vector<BenchmarkCell> cells;
    for (char setting : config.settings)
        for (int size : config.sizes)
            for (int k = 0; k < config.seeds; ++k) {
                BenchmarkCell cell;
                cell.setting = setting;
                cell.size = size;
                cell.seed_index = k;
                cell.seed = derive_seed(config.master_seed,
                                        std::string("cell-") + setting, size, k);
                cells.push_back(cell);
            }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t idx = next.fetch_add(1);
            if (idx >= cells.size()) return;
            BenchmarkCell& cell = cells[idx];
            SampleBatch data =
                to_batch(simulate(SimSetting::preset(cell.setting), cell.size, cell.seed));
            for (EstimatorKind kind : config.estimators)
                cell.estimates[estimator_name(kind)] = detail::run_estimator(
                    kind, data, dag, config.train, config.mc_samples, cell.seed);
            if (writing) {
                const std::string name = std::string(1, cell.setting) + "_" +
                                         std::to_string(cell.size) + "_s" +
                                         std::to_string(cell.seed_index) + ".json";
                write_json_file(detail::cell_to_json(cell),
                                (fs::path(config.out_dir) / "cells" / name).string());
            }
            log_info("benchmark cell " + std::string(1, cell.setting) + "/" +
                     std::to_string(cell.size) + "/" + std::to_string(cell.seed_index) +
                     " done");
        }
    };
    const int jobs = std::max(1, config.jobs);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    BenchmarkReport report;
    report.config = config;
    report.cells = cells;
    const std::array<std::string, 3> lambda_names{"l10", "l01", "l11"};
    const std::array<double, 3> truths{0.2, 0.2, 0.3};
    for (char setting : config.settings)
        for (int size : config.sizes)
            for (EstimatorKind kind : config.estimators)
                for (int L = 0; L < 3; ++L) {
                    SummaryRow row;
                    row.setting = std::string(1, setting);
                    row.size = size;
                    row.estimator = estimator_name(kind);
                    row.lambda = lambda_names[L];
                    row.truth = truths[L];
                    for (const auto& cell : cells) {
                        if (cell.setting != setting || cell.size != size) continue;
                        const AteTriple& est = cell.estimates.at(row.estimator);
                        row.estimates.push_back(L == 0 ? est.l10
                                                : L == 1 ? est.l01
                                                         : est.l11);
                    }
                    const int m = static_cast<int>(row.estimates.size());
                    double sum = 0.0;
                    for (double v : row.estimates) sum += v;
                    row.mean = sum / m;
                    double ss = 0.0;
                    for (double v : row.estimates) ss += (v - row.mean) * (v - row.mean);
                    row.stddev = m > 1 ? std::sqrt(ss / (m - 1)) : 0.0;
                    row.zero_in_band =
                        row.mean - row.stddev <= 0.0 && 0.0 <= row.mean + row.stddev;
                    row.sign_correct = (row.mean > 0) == (row.truth > 0);
                    report.summary.push_back(row);
                }

    if (writing) {
        nlohmann::json j;
        j["config"] = {
            {"settings", std::string(config.settings.begin(), config.settings.end())},
            {"sizes", config.sizes},
            {"seeds", config.seeds},
            {"estimators", [&] {
                 std::vector<std::string> names;
                 for (EstimatorKind k : config.estimators)
                     names.push_back(estimator_name(k));
                 return names;
             }()},
            {"mc_samples", config.mc_samples},
            {"master_seed", config.master_seed},
            {"train", {{"learning_rate", config.train.learning_rate},
                       {"batch_size", config.train.batch_size},
                       {"max_epochs", config.train.max_epochs},
                       {"patience", config.train.patience},
                       {"quadrature_nodes", config.train.quadrature_nodes}}}};
        j["cells"] = nlohmann::json::array();
        for (const auto& cell : report.cells) j["cells"].push_back(detail::cell_to_json(cell));
        j["summary"] = nlohmann::json::array();
        for (const auto& row : report.summary)
            j["summary"].push_back({{"setting", row.setting},
                                    {"size", row.size},
                                    {"estimator", row.estimator},
                                    {"lambda", row.lambda},
                                    {"estimates", row.estimates},
                                    {"mean", row.mean},
                                    {"std", row.stddev},
                                    {"truth", row.truth},
                                    {"zero_in_mu_pm_sigma", row.zero_in_band},
                                    {"sign_correct", row.sign_correct}});
        write_json_file(j, (fs::path(config.out_dir) / "report.json").string());

        std::ofstream csv(fs::path(config.out_dir) / "report.csv");
        csv << "setting,size,estimator,lambda,seed_index,estimate,mean,std,truth\n";
        for (const auto& row : report.summary)
            for (std::size_t k = 0; k < row.estimates.size(); ++k)
                csv << row.setting << "," << row.size << "," << row.estimator << ","
                    << row.lambda << "," << k << "," << format_double(row.estimates[k])
                    << "," << format_double(row.mean) << "," << format_double(row.stddev)
                    << "," << format_double(row.truth) << "\n";
    }
    return report;
}

// ---------------------------------------------------------------------------
// Policy evaluation: confusion matrix between true and predicted optimal
// per-unit policies on the validation and test splits.

struct Confusion {
    std::array<std::array<int, 4>, 4> matrix{};  // rows true, cols predicted
    int count = 0;

    static int arm_index(std::pair<int, int> arm) { return arm.first * 2 + arm.second; }

    void add(std::pair<int, int> truth, std::pair<int, int> predicted) {
        ++matrix[arm_index(truth)][arm_index(predicted)];
        ++count;
    }

    double accuracy() const {
        if (count == 0) return 0.0;
        int diag = 0;
        for (int i = 0; i < 4; ++i) diag += matrix[i][i];
        return static_cast<double>(diag) / count;
    }

    nlohmann::json to_json() const {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& r : matrix) rows.push_back(r);
        return {{"matrix", rows}, {"accuracy", accuracy()}, {"count", count}};
    }
};

struct PolicyEvalResult {
    Confusion validation, test, combined;

    nlohmann::json to_json() const {
        return {{"arms", {"(0,0)", "(0,1)", "(1,0)", "(1,1)"}},
                {"validation", validation.to_json()},
                {"test", test.to_json()},
                {"combined", combined.to_json()}};
    }
};

// The dataset must be the training dataset (the model's stored split seed and
// ratios recover the same validation/test rows); the sidecar supplies the
// exogenous noise for the true optimal policies.
inline PolicyEvalResult run_policy_eval(const FlowModel& model,
                                        const SampleBatch& data,
                                        const SampleBatch& sidecar,
                                        const SimSetting& setting) {
    if (!model.meta().trained)
        throw Error("policy eval: model carries no training metadata");
    if (data.rows() != model.meta().n_data)
        throw ShapeMismatch("policy eval: dataset size differs from training data");
    if (sidecar.rows() != data.rows())
        throw MissingSidecar("policy eval: sidecar rows do not match dataset");
    DataSplit split = split_indices(data.rows(), model.meta().seed,
                                    model.meta().train_frac, model.meta().val_frac);
    PolicyEvalResult result;
    auto eval_rows = [&](const std::vector<int>& rows, Confusion& conf) {
        for (int r : rows) {
            Eigen::VectorXd unit = data.values.row(r).transpose();
            const auto predicted = counterfactual(model, unit).policy;
            const auto truth = true_optimal_policy(noise_from_row(sidecar, r), setting);
            conf.add(truth, predicted);
            result.combined.add(truth, predicted);
        }
    };
    eval_rows(split.val, result.validation);
    eval_rows(split.test, result.test);
    return result;
}

// ---------------------------------------------------------------------------
// Surface export. Per arm, rows (z_c1, z_c2, a1, a2, y). When a setting is
// given, appends the ground-truth surface value from the same noise grid.

inline int run_surface(const FlowModel& model, const GridSpec& grid,
                       const std::vector<std::pair<int, int>>& arms,
                       const std::optional<SimSetting>& setting,
                       const std::string& out_path) {
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot open for writing: " + out_path);
    out << "z_c1,z_c2,a1,a2,y";
    if (setting) out << ",y_true";
    out << "\n";
    int rows = 0;
    for (const auto& [a1, a2] : arms) {
        Eigen::MatrixXd surface = potential_outcome_surface(model, grid, a1, a2);
        for (int r = 0; r < surface.rows(); ++r) {
            out << format_double(surface(r, 0)) << "," << format_double(surface(r, 1))
                << "," << a1 << "," << a2 << "," << format_double(surface(r, 4));
            if (setting) {
                NoiseRecord noise{surface(r, 0), 0.5, surface(r, 1), 0.5, 0.0};
                out << "," << format_double(true_potential_outcome(noise, a1, a2, *setting));
            }
            out << "\n";
            ++rows;
        }
    }
    return rows;
}

}  // namespace cgnf
