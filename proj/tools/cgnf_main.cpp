// SPDX-License-Identifier: Apache-2.0
//
// cgnf command-line harness: simulate | train | ate | baselines |
// counterfactual | policy | surface | benchmark | oracle.
// Exit codes: 0 success, 1 usage/file error, 2 numerical failure.

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cgnf/baselines.hpp"
#include "cgnf/causal.hpp"
#include "cgnf/flow.hpp"
#include "cgnf/gcomp_oracle.hpp"
#include "cgnf/harness.hpp"
#include "cgnf/io.hpp"
#include "cgnf/scm_sim.hpp"

using namespace cgnf;

namespace {

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto comma = text.find(',', pos);
        out.push_back(std::stoi(text.substr(pos, comma - pos)));
        pos = comma == std::string::npos ? text.size() : comma + 1;
    }
    return out;
}

std::vector<char> parse_setting_list(const std::string& text) {
    std::vector<char> out;
    for (char c : text) {
        if (c == ',' || c == ' ') continue;
        SimSetting::preset(c);  // validates
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    if (out.empty()) throw Error("no settings given");
    return out;
}

std::map<std::string, int> spec_to_labels(const InterventionSpec& spec) {
    std::map<std::string, int> out;
    for (const auto& [name, value] : spec.assignments) {
        const int label = static_cast<int>(std::llround(value));
        if (std::abs(value - label) > 1e-9)
            throw Error("oracle interventions need integer labels: " + name);
        out[name] = label;
    }
    return out;
}

CausalDAG dag_for(const std::string& dag_path) {
    if (dag_path.empty()) return two_wave_dag();
    return CausalDAG::from_json(read_json_file(dag_path));
}

std::vector<std::pair<int, int>> parse_arms(const std::string& text) {
    if (text == "all") return {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    auto comma = text.find(',');
    if (comma == std::string::npos) throw Error("arm must be 'a1,a2' or 'all'");
    return {{std::stoi(text.substr(0, comma)), std::stoi(text.substr(comma + 1))}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"causal graphical normalizing flows: interventional and "
                 "counterfactual inference on the 2-wave benchmark"};
    app.require_subcommand(1);

    // ---- simulate ----
    auto* sim = app.add_subcommand("simulate", "draw a synthetic 2-wave dataset");
    std::string sim_setting = "a", sim_out, sim_noise_out;
    int sim_n = 2000;
    std::uint64_t sim_seed = 1;
    sim->add_option("--setting", sim_setting, "a|b|c")->required();
    sim->add_option("--n", sim_n, "sample count")->required()->check(CLI::PositiveNumber);
    sim->add_option("--seed", sim_seed, "rng seed");
    sim->add_option("--out", sim_out, "dataset CSV path")->required();
    sim->add_option("--noise-out", sim_noise_out, "oracle noise sidecar CSV path");
    sim->callback([&] {
        auto units = simulate(SimSetting::preset(sim_setting[0]), sim_n, sim_seed);
        write_csv(to_batch(units), sim_out);
        if (!sim_noise_out.empty()) write_csv(noise_sidecar(units), sim_noise_out);
        std::printf("wrote %d units to %s\n", sim_n, sim_out.c_str());
    });

    // ---- train ----
    auto* train = app.add_subcommand("train", "fit a c-GNF by maximum likelihood");
    std::string train_data, train_dag, train_out;
    TrainConfig train_cfg;
    train->add_option("--data", train_data, "training CSV")->required();
    train->add_option("--dag", train_dag, "DAG JSON (default: built-in 2-wave)");
    train->add_option("--out", train_out, "model JSON path")->required();
    train->add_option("--seed", train_cfg.seed, "split/init/shuffle seed");
    train->add_option("--max-epochs", train_cfg.max_epochs, "epoch cap");
    train->add_option("--patience", train_cfg.patience, "early-stop patience");
    train->add_option("--batch-size", train_cfg.batch_size, "minibatch size");
    train->add_option("--lr", train_cfg.learning_rate, "AdamW learning rate");
    train->add_option("--weight-decay", train_cfg.weight_decay, "AdamW weight decay");
    train->add_option("--q", train_cfg.quadrature_nodes, "quadrature nodes");
    train->callback([&] {
        SampleBatch data = read_csv(train_data);
        CausalDAG dag = dag_for(train_dag);
        auto [model, log] = fit(dag, data, train_cfg);
        model.save(train_out);
        std::printf("trained %zu epochs (best %d): val NLL %.4f, test NLL %.4f -> %s\n",
                    log.epochs.size(), log.best_epoch, log.best_val_nll, log.test_nll,
                    train_out.c_str());
    });

    // ---- ate ----
    auto* ate = app.add_subcommand("ate", "Monte-Carlo ATE contrasts from a model");
    std::string ate_model, ate_out;
    int ate_mc = 2000;
    std::uint64_t ate_seed = 1;
    ate->add_option("--model", ate_model, "model JSON")->required();
    ate->add_option("--mc-samples", ate_mc, "interventional draws per arm");
    ate->add_option("--seed", ate_seed, "rng seed");
    ate->add_option("--out", ate_out, "estimate JSON path");
    ate->callback([&] {
        FlowModel model = FlowModel::load(ate_model);
        AteEstimate e = estimate_ate(model, ate_mc, ate_seed);
        nlohmann::json j{{"l10", e.l10}, {"l01", e.l01}, {"l11", e.l11},
                         {"mc_samples", ate_mc}, {"seed", ate_seed}};
        std::printf("%s\n", j.dump().c_str());
        if (!ate_out.empty()) write_json_file(j, ate_out);
    });

    // ---- baselines ----
    auto* base = app.add_subcommand("baselines", "classical estimators on a dataset");
    std::string base_data, base_estimators = "ipw,rwr,gcom,gcom_theta", base_out,
                base_recipes;
    base->add_option("--data", base_data, "dataset CSV")->required();
    base->add_option("--estimators", base_estimators, "comma list or 'all'");
    base->add_option("--recipes", base_recipes,
                     "JSON file with ipw propensity recipes {\"ipw\":{\"a1\":[...],\"a2\":[...]}}");
    base->add_option("--out", base_out, "estimates JSON path");
    base->callback([&] {
        SampleBatch data = read_csv(base_data);
        IpwSpec ipw_spec;
        if (!base_recipes.empty()) {
            nlohmann::json j = read_json_file(base_recipes);
            if (j.contains("ipw")) {
                ipw_spec.a1_model.terms =
                    j["ipw"].value("a1", std::vector<std::string>{"C1"});
                ipw_spec.a2_model.terms =
                    j["ipw"].value("a2", std::vector<std::string>{"A1", "C2"});
            }
        }
        nlohmann::json out;
        for (EstimatorKind kind : parse_estimators(base_estimators)) {
            if (kind == EstimatorKind::Cgnf) continue;  // covered by train + ate
            AteTriple e;
            switch (kind) {
                case EstimatorKind::Ipw: e = ipw_estimate(data, ipw_spec); break;
                case EstimatorKind::Rwr: e = rwr_estimate(data); break;
                case EstimatorKind::Gcom: e = gcom_estimate(data, false); break;
                case EstimatorKind::GcomTheta: e = gcom_estimate(data, true); break;
                default: break;
            }
            out[estimator_name(kind)] = {{"l10", e.l10}, {"l01", e.l01}, {"l11", e.l11}};
        }
        std::printf("%s\n", out.dump().c_str());
        if (!base_out.empty()) write_json_file(out, base_out);
    });

    // ---- counterfactual ----
    auto* cf = app.add_subcommand("counterfactual",
                                  "per-unit potential outcomes and optimal arms");
    std::string cf_model, cf_data, cf_out, cf_setting, cf_noise;
    int cf_limit = -1;
    cf->add_option("--model", cf_model, "model JSON")->required();
    cf->add_option("--data", cf_data, "units CSV (full observation rows)")->required();
    cf->add_option("--out", cf_out, "report JSON path")->required();
    cf->add_option("--limit", cf_limit, "only the first N units");
    cf->add_option("--setting", cf_setting, "include true optimal arm (needs --noise)");
    cf->add_option("--noise", cf_noise, "noise sidecar CSV for the true arm");
    cf->callback([&] {
        FlowModel model = FlowModel::load(cf_model);
        SampleBatch data = read_csv(cf_data);
        std::optional<SampleBatch> sidecar;
        if (!cf_setting.empty()) {
            if (cf_noise.empty())
                throw MissingSidecar("--setting requires --noise sidecar");
            sidecar = read_csv(cf_noise);
            if (sidecar->rows() != data.rows())
                throw MissingSidecar("sidecar rows do not match dataset");
        }
        const int n = cf_limit > 0 ? std::min(cf_limit, data.rows()) : data.rows();
        nlohmann::json out = nlohmann::json::array();
        for (int r = 0; r < n; ++r) {
            Eigen::VectorXd unit = data.values.row(r).transpose();
            CounterfactualResult res = counterfactual(model, unit);
            nlohmann::json ju;
            for (int j = 0; j < data.cols(); ++j)
                ju["observed"][data.names[j]] = unit[j];
            ju["z"] = std::vector<double>(res.z.data(), res.z.data() + res.z.size());
            for (const auto& [arm, y] : res.outcomes)
                ju["potential_outcomes"][std::to_string(arm.first) +
                                         std::to_string(arm.second)] = y;
            ju["policy"] = {res.policy.first, res.policy.second};
            if (sidecar) {
                auto truth = true_optimal_policy(noise_from_row(*sidecar, r),
                                                 SimSetting::preset(cf_setting[0]));
                ju["true_policy"] = {truth.first, truth.second};
            }
            out.push_back(ju);
        }
        write_json_file(out, cf_out);
        std::printf("wrote %d counterfactual reports to %s\n", n, cf_out.c_str());
    });

    // ---- policy ----
    auto* pol = app.add_subcommand("policy",
                                   "confusion matrix of predicted vs true optimal policy");
    std::string pol_model, pol_data, pol_noise, pol_setting, pol_out;
    pol->add_option("--model", pol_model, "model JSON")->required();
    pol->add_option("--data", pol_data, "training dataset CSV")->required();
    pol->add_option("--noise", pol_noise, "noise sidecar CSV")->required();
    pol->add_option("--setting", pol_setting, "a|b|c")->required();
    pol->add_option("--out", pol_out, "confusion JSON path");
    pol->callback([&] {
        FlowModel model = FlowModel::load(pol_model);
        PolicyEvalResult res =
            run_policy_eval(model, read_csv(pol_data), read_csv(pol_noise),
                            SimSetting::preset(pol_setting[0]));
        std::printf("validation accuracy %.4f (n=%d), test accuracy %.4f (n=%d)\n",
                    res.validation.accuracy(), res.validation.count,
                    res.test.accuracy(), res.test.count);
        if (!pol_out.empty()) write_json_file(res.to_json(), pol_out);
    });

    // ---- surface ----
    auto* surf = app.add_subcommand("surface", "potential-outcome map over base noise");
    std::string surf_model, surf_grid = "-3:3:61", surf_arm = "all", surf_setting,
                surf_out;
    surf->add_option("--model", surf_model, "model JSON")->required();
    surf->add_option("--grid", surf_grid, "lo:hi:n for both axes");
    surf->add_option("--arm", surf_arm, "'a1,a2' or 'all'");
    surf->add_option("--setting", surf_setting, "append oracle surface for a|b|c");
    surf->add_option("--out", surf_out, "surface CSV path")->required();
    surf->callback([&] {
        FlowModel model = FlowModel::load(surf_model);
        std::optional<SimSetting> setting;
        if (!surf_setting.empty()) setting = SimSetting::preset(surf_setting[0]);
        const int rows = run_surface(model, GridSpec::parse(surf_grid),
                                     parse_arms(surf_arm), setting, surf_out);
        std::printf("wrote %d surface rows to %s\n", rows, surf_out.c_str());
    });

    // ---- benchmark ----
    auto* bench = app.add_subcommand("benchmark", "full estimator comparison");
    BenchmarkConfig bench_cfg;
    std::string bench_settings = "a", bench_sizes = "500,2000",
                bench_estimators = "all";
    bench->add_option("--settings", bench_settings, "comma list of a,b,c");
    bench->add_option("--sizes", bench_sizes, "comma list of training sizes");
    bench->add_option("--seeds", bench_cfg.seeds, "seeded replications per cell");
    bench->add_option("--estimators", bench_estimators, "comma list or 'all'");
    bench->add_option("--master-seed", bench_cfg.master_seed, "master seed");
    bench->add_option("--mc-samples", bench_cfg.mc_samples, "interventional draws");
    bench->add_option("--jobs", bench_cfg.jobs, "worker pool size");
    bench->add_option("--out", bench_cfg.out_dir, "output directory")->required();
    bench->add_option("--max-epochs", bench_cfg.train.max_epochs, "c-GNF epoch cap");
    bench->add_option("--patience", bench_cfg.train.patience, "c-GNF patience");
    bench->add_option("--batch-size", bench_cfg.train.batch_size, "c-GNF batch size");
    bench->add_option("--lr", bench_cfg.train.learning_rate, "c-GNF learning rate");
    bench->add_option("--q", bench_cfg.train.quadrature_nodes, "quadrature nodes");
    bench->callback([&] {
        bench_cfg.settings = parse_setting_list(bench_settings);
        bench_cfg.sizes = parse_int_list(bench_sizes);
        bench_cfg.estimators = parse_estimators(bench_estimators);
        BenchmarkReport report = run_benchmark(bench_cfg);
        std::printf("benchmark: %zu cells -> %s/report.json\n", report.cells.size(),
                    bench_cfg.out_dir.c_str());
    });

    // ---- oracle ----
    auto* orc = app.add_subcommand("oracle", "g-computation on a discrete SCM");
    std::string orc_scm, orc_do, orc_contrast, orc_target = "Y", orc_out;
    bool orc_fixture = false;
    int orc_fixture_n = 20000;
    std::uint64_t orc_fixture_seed = 7;
    orc->add_option("--scm", orc_scm, "DiscreteSCM JSON file");
    orc->add_flag("--fixture", orc_fixture, "use the binarized 2-wave fixture");
    orc->add_option("--fixture-n", orc_fixture_n, "fixture estimation sample size");
    orc->add_option("--fixture-seed", orc_fixture_seed, "fixture seed");
    orc->add_option("--do", orc_do, "intervention, e.g. A1=1,A2=0");
    orc->add_option("--contrast-with", orc_contrast, "second arm for an ATE contrast");
    orc->add_option("--target", orc_target, "target node");
    orc->add_option("--out", orc_out, "result JSON path");
    orc->callback([&] {
        DiscreteSCM scm;
        if (orc_fixture)
            scm = binarized_two_wave_fixture(orc_fixture_n, orc_fixture_seed);
        else if (!orc_scm.empty())
            scm = DiscreteSCM::from_json(read_json_file(orc_scm));
        else
            throw Error("oracle needs --scm or --fixture");
        auto arm = spec_to_labels(InterventionSpec::parse(orc_do));
        Eigen::VectorXd dist = interventional_distribution(scm, arm, orc_target);
        nlohmann::json j{{"target", orc_target},
                         {"distribution",
                          std::vector<double>(dist.data(), dist.data() + dist.size())}};
        if (!orc_contrast.empty()) {
            auto arm_b = spec_to_labels(InterventionSpec::parse(orc_contrast));
            j["contrast"] = ate_oracle(scm, arm, arm_b, orc_target);
        }
        std::printf("%s\n", j.dump().c_str());
        if (!orc_out.empty()) write_json_file(j, orc_out);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
