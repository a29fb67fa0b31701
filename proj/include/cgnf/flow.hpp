// SPDX-License-Identifier: Apache-2.0
//
// The c-GNF: a graphical conditioner plus a monotone integration-based
// transformer per node, realizing T: X -> Z with lower-triangular Jacobian,
// its inverse T^-1 (the generative direction, with optional per-node clamps
// for interventions), exact log-density under a standard-normal base, and
// likelihood training with early stopping.
//
// Per node i, with conditioner embedding c_i computed from the parent-masked
// input:
//   z_i = beta_i(c_i) + integral_0^{x_i} g_i(t, c_i) dt
// where g_i = softplus(net) + 1e-6 > 0, so tau_i is strictly increasing in
// x_i and log |det J_T| = sum_i log g_i(x_i, c_i). The integral uses
// Clenshaw-Curtis quadrature with a fixed node count, so the training
// gradient is exact for the discretized objective.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "cgnf/common.hpp"
#include "cgnf/dag.hpp"
#include "cgnf/dequant.hpp"
#include "cgnf/io.hpp"
#include "cgnf/nn.hpp"
#include "cgnf/quadrature.hpp"

namespace cgnf {

struct FlowArch {
    int embedding_width = 10;
    std::vector<int> conditioner_hidden{20, 15};
    std::vector<int> integrand_hidden{15, 10, 5};
    int quadrature_nodes = 20;
};

struct NodeNets {
    Mlp conditioner;  // d -> embedding
    Mlp integrand;    // 1 + embedding -> 1 (raw, positivity applied outside)
    Mlp offset;       // embedding -> 1
};

struct TrainMeta {
    bool trained = false;
    std::uint64_t seed = 0;
    double train_frac = 0.8, val_frac = 0.1, test_frac = 0.1;
    int n_data = 0;
    int best_epoch = -1;
    int epochs_run = 0;
    double best_val_nll = 0.0;
    double test_nll = 0.0;
};

struct DataSplit {
    std::vector<int> train, val, test;
};

// Seeded shuffle split; deterministic for a given (n, seed, fractions).
inline DataSplit split_indices(int n, std::uint64_t seed, double train_frac,
                               double val_frac) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    Rng rng(derive_seed(seed, "split"));
    rng.shuffle(idx);
    const int n_train = static_cast<int>(std::floor(train_frac * n));
    const int n_val = static_cast<int>(std::floor(val_frac * n));
    DataSplit split;
    split.train.assign(idx.begin(), idx.begin() + n_train);
    split.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
    split.test.assign(idx.begin() + n_train + n_val, idx.end());
    return split;
}

constexpr double kIntegrandFloor = 1e-6;
constexpr double kInverseTolerance = 1e-6;
constexpr int kMaxBisectIterations = 200;

class FlowModel {
public:
    FlowModel() = default;

    static FlowModel random(const CausalDAG& dag, const FlowArch& arch,
                            std::uint64_t seed) {
        if (!dag.validated()) throw Error("FlowModel: DAG must be validated");
        FlowModel m;
        m.dag_ = dag;
        m.arch_ = arch;
        m.quad_ = ClenshawCurtis::make(arch.quadrature_nodes);
        const int d = dag.size();
        m.mean_ = Eigen::VectorXd::Zero(d);
        m.std_ = Eigen::VectorXd::Ones(d);
        m.masks_.resize(d);
        for (int i = 0; i < d; ++i) m.masks_[i] = dag.parent_mask(i);
        for (int i = 0; i < d; ++i) {
            Rng rc(derive_seed(seed, "cond", i));
            Rng rg(derive_seed(seed, "integrand", i));
            Rng ro(derive_seed(seed, "offset", i));
            NodeNets nets;
            std::vector<int> cw{d};
            cw.insert(cw.end(), arch.conditioner_hidden.begin(), arch.conditioner_hidden.end());
            cw.push_back(arch.embedding_width);
            nets.conditioner = Mlp::make(cw, Activation::Elu, Activation::Identity, rc);
            std::vector<int> gw{1 + arch.embedding_width};
            gw.insert(gw.end(), arch.integrand_hidden.begin(), arch.integrand_hidden.end());
            gw.push_back(1);
            nets.integrand = Mlp::make(gw, Activation::Elu, Activation::Identity, rg);
            nets.offset = Mlp::make({arch.embedding_width, 1}, Activation::Identity,
                                    Activation::Identity, ro);
            m.nets_.push_back(std::move(nets));
        }
        return m;
    }

    const CausalDAG& dag() const { return dag_; }
    const FlowArch& arch() const { return arch_; }
    const ClenshawCurtis& quadrature() const { return quad_; }
    std::vector<NodeNets>& nets() { return nets_; }
    const std::vector<NodeNets>& nets() const { return nets_; }
    const TrainMeta& meta() const { return meta_; }
    TrainMeta& meta() { return meta_; }
    const Eigen::VectorXd& column_mean() const { return mean_; }
    const Eigen::VectorXd& column_std() const { return std_; }

    void set_standardization(Eigen::VectorXd mean, Eigen::VectorXd std) {
        if (mean.size() != dag_.size() || std.size() != dag_.size())
            throw ShapeMismatch("standardization length mismatch");
        mean_ = std::move(mean);
        std_ = std::move(std);
    }

    double raw_to_std(int col, double v) const { return (v - mean_[col]) / std_[col]; }
    double std_to_raw(int col, double v) const { return v * std_[col] + mean_[col]; }

    // Row-sample batch (n x d) raw -> standardized, and back.
    Eigen::MatrixXd standardize(const Eigen::MatrixXd& raw) const {
        return ((raw.rowwise() - mean_.transpose()).array().rowwise() /
                std_.transpose().array()).matrix();
    }
    Eigen::MatrixXd destandardize(const Eigen::MatrixXd& std_batch) const {
        return (std_batch.array().rowwise() * std_.transpose().array()).matrix()
                   .rowwise() + mean_.transpose();
    }

    // ---- forward direction -------------------------------------------------

    struct ForwardResult {
        Eigen::VectorXd z;
        double logdet = 0.0;
    };

    // x standardized. z_i = beta_i + quadrature integral; logdet accumulates
    // log g_i(x_i) over nodes.
    ForwardResult transform_forward(const Eigen::VectorXd& x) const {
        Eigen::MatrixXd X = x.transpose();
        auto [Z, logdet] = forward_batch(X);
        if (!Z.allFinite() || !std::isfinite(logdet[0]))
            throw NonFiniteValue("transform_forward produced non-finite values");
        return {Z.row(0).transpose(), logdet[0]};
    }

    // Batched forward: X is n x d standardized; returns (Z n x d, logdet n).
    std::pair<Eigen::MatrixXd, Eigen::VectorXd> forward_batch(
        const Eigen::MatrixXd& X) const {
        const int d = dag_.size(), B = static_cast<int>(X.rows());
        if (static_cast<int>(X.cols()) != d)
            throw ShapeMismatch("forward_batch: column count != DAG size");
        Eigen::MatrixXd Z(B, d);
        Eigen::VectorXd logdet = Eigen::VectorXd::Zero(B);
        const Eigen::MatrixXd XT = X.transpose();
        for (int i = 0; i < d; ++i) {
            Eigen::MatrixXd masked = XT.array().colwise() * masks_[i].array();
            Eigen::MatrixXd C = nets_[i].conditioner.forward(masked);
            Eigen::RowVectorXd beta = nets_[i].offset.forward(C).row(0);
            Eigen::VectorXd xi = X.col(i);
            Eigen::MatrixXd gpos = integrand_positive(i, C, xi);  // B x Q
            Z.col(i) = (beta.transpose().array() +
                        0.5 * xi.array() * (gpos * quad_.weights).array())
                           .matrix();
            logdet.array() += gpos.col(0).array().log();  // node 0 is t = x_i
        }
        return {Z, logdet};
    }

    // ---- inverse direction -------------------------------------------------

    // clamps[i], when set, is the standardized value the node is held at
    // (graph mutilation). Solves z_i = tau_i(x_i) by bracketed bisection in
    // topological order.
    Eigen::MatrixXd inverse_batch(
        const Eigen::MatrixXd& Z,
        const std::vector<std::optional<double>>& clamps = {}) const {
        const int d = dag_.size(), B = static_cast<int>(Z.rows());
        if (static_cast<int>(Z.cols()) != d)
            throw ShapeMismatch("inverse_batch: column count != DAG size");
        if (!clamps.empty() && static_cast<int>(clamps.size()) != d)
            throw ShapeMismatch("inverse_batch: clamp length != DAG size");
        Eigen::MatrixXd X = Eigen::MatrixXd::Zero(B, d);
        for (int i : dag_.topological_order()) {
            if (!clamps.empty() && clamps[i]) {
                X.col(i).setConstant(*clamps[i]);
                continue;
            }
            Eigen::MatrixXd masked =
                X.transpose().array().colwise() * masks_[i].array();
            Eigen::MatrixXd C = nets_[i].conditioner.forward(masked);
            Eigen::RowVectorXd beta = nets_[i].offset.forward(C).row(0);
            X.col(i) = invert_node(i, C, beta, Z.col(i));
        }
        if (!X.allFinite())
            throw NonFiniteValue("inverse_batch produced non-finite values");
        return X;
    }

    Eigen::VectorXd transform_inverse(
        const Eigen::VectorXd& z,
        const std::vector<std::optional<double>>& clamps = {}) const {
        Eigen::MatrixXd Z = z.transpose();
        return inverse_batch(Z, clamps).row(0).transpose();
    }

    // ---- density -----------------------------------------------------------

    // Total log-likelihood of a standardized batch under the standard-normal
    // base plus the flow's log-determinant.
    double log_likelihood(const Eigen::MatrixXd& X) const {
        const int d = dag_.size();
        double total = 0.0;
        const int chunk = 1024;
        for (int start = 0; start < X.rows(); start += chunk) {
            const int b = std::min<int>(chunk, static_cast<int>(X.rows()) - start);
            auto [Z, logdet] = forward_batch(X.middleRows(start, b));
            const double quad_z = 0.5 * Z.array().square().sum();
            total += -quad_z - 0.5 * d * std::log(2.0 * M_PI) * b + logdet.sum();
        }
        if (!std::isfinite(total))
            throw NonFiniteValue("log_likelihood is non-finite");
        return total;
    }

    // ---- serialization -----------------------------------------------------

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["format"] = "cgnf-model";
        j["version"] = 1;
        j["dag"] = dag_.to_json();
        j["arch"] = {{"embedding_width", arch_.embedding_width},
                     {"conditioner_hidden", arch_.conditioner_hidden},
                     {"integrand_hidden", arch_.integrand_hidden},
                     {"quadrature_nodes", arch_.quadrature_nodes}};
        j["standardization"] = {
            {"mean", std::vector<double>(mean_.data(), mean_.data() + mean_.size())},
            {"std", std::vector<double>(std_.data(), std_.data() + std_.size())}};
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& nets : nets_) {
            nodes.push_back({{"conditioner", mlp_to_json(nets.conditioner)},
                             {"integrand", mlp_to_json(nets.integrand)},
                             {"offset", mlp_to_json(nets.offset)}});
        }
        j["nodes"] = nodes;
        if (meta_.trained) {
            j["training"] = {{"seed", meta_.seed},
                             {"train_frac", meta_.train_frac},
                             {"val_frac", meta_.val_frac},
                             {"test_frac", meta_.test_frac},
                             {"n_data", meta_.n_data},
                             {"best_epoch", meta_.best_epoch},
                             {"epochs_run", meta_.epochs_run},
                             {"best_val_nll", meta_.best_val_nll},
                             {"test_nll", meta_.test_nll}};
        }
        return j;
    }

    static FlowModel from_json(const nlohmann::json& j) {
        if (j.value("format", "") != "cgnf-model")
            throw IoError("not a cgnf model file");
        FlowModel m;
        m.dag_ = CausalDAG::from_json(j.at("dag"));
        const auto& ja = j.at("arch");
        m.arch_.embedding_width = ja.at("embedding_width");
        m.arch_.conditioner_hidden = ja.at("conditioner_hidden").get<std::vector<int>>();
        m.arch_.integrand_hidden = ja.at("integrand_hidden").get<std::vector<int>>();
        m.arch_.quadrature_nodes = ja.at("quadrature_nodes");
        m.quad_ = ClenshawCurtis::make(m.arch_.quadrature_nodes);
        auto mean = j.at("standardization").at("mean").get<std::vector<double>>();
        auto stdv = j.at("standardization").at("std").get<std::vector<double>>();
        m.mean_ = Eigen::Map<Eigen::VectorXd>(mean.data(), mean.size());
        m.std_ = Eigen::Map<Eigen::VectorXd>(stdv.data(), stdv.size());
        const int d = m.dag_.size();
        m.masks_.resize(d);
        for (int i = 0; i < d; ++i) m.masks_[i] = m.dag_.parent_mask(i);
        for (const auto& jn : j.at("nodes")) {
            NodeNets nets;
            nets.conditioner = mlp_from_json(jn.at("conditioner"));
            nets.integrand = mlp_from_json(jn.at("integrand"));
            nets.offset = mlp_from_json(jn.at("offset"));
            m.nets_.push_back(std::move(nets));
        }
        if (static_cast<int>(m.nets_.size()) != d)
            throw IoError("model file: node count mismatch");
        if (j.contains("training")) {
            const auto& jt = j.at("training");
            m.meta_.trained = true;
            m.meta_.seed = jt.at("seed");
            m.meta_.train_frac = jt.at("train_frac");
            m.meta_.val_frac = jt.at("val_frac");
            m.meta_.test_frac = jt.at("test_frac");
            m.meta_.n_data = jt.at("n_data");
            m.meta_.best_epoch = jt.at("best_epoch");
            m.meta_.epochs_run = jt.at("epochs_run");
            m.meta_.best_val_nll = jt.at("best_val_nll");
            m.meta_.test_nll = jt.at("test_nll");
        }
        return m;
    }

    void save(const std::string& path) const { write_json_file(to_json(), path); }
    static FlowModel load(const std::string& path) {
        return from_json(read_json_file(path));
    }

    // ---- internals shared with fit() ---------------------------------------

    const Eigen::ArrayXd& parent_mask(int i) const { return masks_[i]; }

    // Integrand evaluated at the Q quadrature points of [0, x_b] for each
    // sample; returns B x Q positive values. C is embedding x B.
    Eigen::MatrixXd integrand_positive(int i, const Eigen::MatrixXd& C,
                                       const Eigen::VectorXd& x) const {
        const int B = static_cast<int>(x.size());
        const int Q = arch_.quadrature_nodes;
        Eigen::MatrixXd gin = build_integrand_input(i, C, x);
        Eigen::RowVectorXd raw = nets_[i].integrand.forward(gin).row(0);
        Eigen::MatrixXd gpos(B, Q);
        for (int b = 0; b < B; ++b)
            for (int k = 0; k < Q; ++k)
                gpos(b, k) = softplus(raw[b * Q + k]) + kIntegrandFloor;
        return gpos;
    }

    Eigen::MatrixXd build_integrand_input(int i, const Eigen::MatrixXd& C,
                                          const Eigen::VectorXd& x) const {
        const int B = static_cast<int>(x.size());
        const int Q = arch_.quadrature_nodes;
        const int E = arch_.embedding_width;
        Eigen::MatrixXd gin(1 + E, B * Q);
        for (int b = 0; b < B; ++b) {
            gin.block(1, b * Q, E, Q) = C.col(b).replicate(1, Q);
            for (int k = 0; k < Q; ++k)
                gin(0, b * Q + k) = x[b] * 0.5 * (quad_.nodes[k] + 1.0);
        }
        return gin;
    }

    // tau_i(x) = beta_i + (x/2) * sum_k w_k g(t_k); strictly increasing in x.
    Eigen::VectorXd tau(int i, const Eigen::MatrixXd& C,
                        const Eigen::RowVectorXd& beta,
                        const Eigen::VectorXd& x) const {
        Eigen::MatrixXd gpos = integrand_positive(i, C, x);
        return (beta.transpose().array() +
                0.5 * x.array() * (gpos * quad_.weights).array()).matrix();
    }

private:
    Eigen::VectorXd invert_node(int i, const Eigen::MatrixXd& C,
                                const Eigen::RowVectorXd& beta,
                                const Eigen::VectorXd& z) const {
        const int B = static_cast<int>(z.size());
        Eigen::VectorXd lo = Eigen::VectorXd::Constant(B, -1.0);
        Eigen::VectorXd hi = Eigen::VectorXd::Constant(B, 1.0);
        Eigen::VectorXd f_lo = tau(i, C, beta, lo);
        Eigen::VectorXd f_hi = tau(i, C, beta, hi);
        // Bracket by doubling outward from [-1, 1].
        for (int round = 0;; ++round) {
            bool expand = false;
            for (int b = 0; b < B; ++b) {
                if (f_lo[b] > z[b]) { lo[b] *= 2.0; expand = true; }
                if (f_hi[b] < z[b]) { hi[b] *= 2.0; expand = true; }
            }
            if (!expand) break;
            if (round >= 64 || !f_lo.allFinite() || !f_hi.allFinite())
                throw BracketingFailed("inverse: cannot bracket root for node " +
                                       dag_.node(i).name);
            f_lo = tau(i, C, beta, lo);
            f_hi = tau(i, C, beta, hi);
        }
        for (int iter = 0; iter < kMaxBisectIterations; ++iter) {
            if ((hi - lo).maxCoeff() <= kInverseTolerance) break;
            Eigen::VectorXd mid = 0.5 * (lo + hi);
            Eigen::VectorXd f_mid = tau(i, C, beta, mid);
            for (int b = 0; b < B; ++b) {
                if (f_mid[b] < z[b]) lo[b] = mid[b];
                else hi[b] = mid[b];
            }
        }
        return 0.5 * (lo + hi);
    }

    static nlohmann::json mlp_to_json(const Mlp& net) {
        nlohmann::json layers = nlohmann::json::array();
        for (const auto& l : net.layers) {
            std::vector<double> w(l.W.size());
            Eigen::Map<Eigen::MatrixXd>(w.data(), l.W.rows(), l.W.cols()) = l.W;
            layers.push_back({{"rows", l.W.rows()},
                              {"cols", l.W.cols()},
                              {"w", w},
                              {"b", std::vector<double>(l.b.data(), l.b.data() + l.b.size())},
                              {"activation", activation_name(l.act)}});
        }
        return {{"layers", layers}};
    }

    static Mlp mlp_from_json(const nlohmann::json& j) {
        Mlp net;
        for (const auto& jl : j.at("layers")) {
            Layer l;
            const int rows = jl.at("rows"), cols = jl.at("cols");
            auto w = jl.at("w").get<std::vector<double>>();
            auto b = jl.at("b").get<std::vector<double>>();
            if (static_cast<int>(w.size()) != rows * cols ||
                static_cast<int>(b.size()) != rows)
                throw IoError("model file: layer shape mismatch");
            l.W = Eigen::Map<Eigen::MatrixXd>(w.data(), rows, cols);
            l.b = Eigen::Map<Eigen::VectorXd>(b.data(), rows);
            l.act = activation_from_name(jl.at("activation"));
            net.layers.push_back(std::move(l));
        }
        return net;
    }

    CausalDAG dag_;
    FlowArch arch_;
    std::vector<NodeNets> nets_;
    Eigen::VectorXd mean_, std_;
    std::vector<Eigen::ArrayXd> masks_;
    ClenshawCurtis quad_;
    TrainMeta meta_;
};

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    int batch_size = 128;
    int max_epochs = 300;
    int patience = 10;
    double train_frac = 0.8, val_frac = 0.1, test_frac = 0.1;
    int quadrature_nodes = 20;
    std::uint64_t seed = 0;
};

struct EpochLog {
    double train_nll;  // per-sample mean over the epoch's minibatches
    double val_nll;    // per-sample mean on the validation split
};

struct TrainLog {
    std::vector<EpochLog> epochs;
    int best_epoch = -1;
    double best_val_nll = std::numeric_limits<double>::infinity();
    double test_nll = 0.0;
};

namespace detail {

// One reverse pass of the mean-NLL objective for a standardized minibatch;
// accumulates gradients for all nets of every node and returns the batch's
// mean NLL.
inline double nll_backward_batch(const FlowModel& model, const Eigen::MatrixXd& X,
                                 std::vector<std::array<MlpGrads, 3>>& grads) {
    const int d = model.dag().size();
    const int B = static_cast<int>(X.rows());
    const int Q = model.arch().quadrature_nodes;
    const int E = model.arch().embedding_width;
    const auto& w = model.quadrature().weights;
    const Eigen::MatrixXd XT = X.transpose();
    double nll = 0.5 * d * std::log(2.0 * M_PI) * B;
    for (int i = 0; i < d; ++i) {
        const auto& nets = model.nets()[i];
        Eigen::MatrixXd masked = XT.array().colwise() * model.parent_mask(i).array();
        MlpCache cond_cache, g_cache, off_cache;
        Eigen::MatrixXd C = nets.conditioner.forward_cached(masked, cond_cache);
        Eigen::MatrixXd gin = model.build_integrand_input(i, C, X.col(i));
        Eigen::RowVectorXd raw = nets.integrand.forward_cached(gin, g_cache).row(0);
        Eigen::RowVectorXd beta = nets.offset.forward_cached(C, off_cache).row(0);

        Eigen::VectorXd z(B);
        Eigen::MatrixXd gpos(B, Q);
        for (int b = 0; b < B; ++b) {
            double acc = 0.0;
            for (int k = 0; k < Q; ++k) {
                gpos(b, k) = softplus(raw[b * Q + k]) + kIntegrandFloor;
                acc += w[k] * gpos(b, k);
            }
            z[b] = beta[b] + 0.5 * X(b, i) * acc;
            nll += 0.5 * z[b] * z[b] - std::log(gpos(b, 0));
        }

        // dL/dz and dL/d gpos for the mean-over-batch objective.
        Eigen::MatrixXd ds(1, B * Q);
        for (int b = 0; b < B; ++b) {
            const double dz = z[b] / B;
            for (int k = 0; k < Q; ++k) {
                double dgpos = dz * 0.5 * X(b, i) * w[k];
                if (k == 0) dgpos -= 1.0 / (B * gpos(b, 0));
                ds(0, b * Q + k) = dgpos * sigmoid(raw[b * Q + k]);
            }
        }
        Eigen::MatrixXd dgin = nets.integrand.backward(g_cache, ds, grads[i][1]);

        Eigen::MatrixXd dC(E, B);
        for (int b = 0; b < B; ++b)
            dC.col(b) = dgin.block(1, b * Q, E, Q).rowwise().sum();
        Eigen::MatrixXd dbeta(1, B);
        for (int b = 0; b < B; ++b) dbeta(0, b) = z[b] / B;
        dC += nets.offset.backward(off_cache, dbeta, grads[i][2]);
        nets.conditioner.backward(cond_cache, dC, grads[i][0]);
    }
    if (!std::isfinite(nll)) throw DivergedLoss("minibatch NLL is non-finite");
    return nll / B;
}

}  // namespace detail

// Maximum-likelihood training with a seeded 8:1:1 split, per-epoch
// re-dequantization of discrete columns (validation/test use a fixed
// dequantization seed), AdamW, and best-validation early stopping.
inline std::pair<FlowModel, TrainLog> fit(const CausalDAG& dag,
                                          const SampleBatch& data,
                                          const TrainConfig& config,
                                          const FlowArch& arch_in = {}) {
    const int d = dag.size();
    const int n = data.rows();
    if (data.cols() != d) throw ShapeMismatch("fit: data columns != DAG size");
    for (int j = 0; j < d; ++j)
        if (data.names[j] != dag.node(j).name)
            throw ShapeMismatch("fit: column " + data.names[j] +
                                " does not match DAG node " + dag.node(j).name);

    DataSplit split = split_indices(n, config.seed, config.train_frac, config.val_frac);
    if (split.train.empty() || split.val.empty() || split.test.empty())
        throw InsufficientData("fit: a data split is empty");

    // Standardization statistics from the raw training rows.
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d), stdv = Eigen::VectorXd::Ones(d);
    for (int j = 0; j < d; ++j) {
        double s = 0.0;
        for (int r : split.train) s += data.values(r, j);
        mean[j] = s / split.train.size();
        double ss = 0.0;
        for (int r : split.train) {
            const double c = data.values(r, j) - mean[j];
            ss += c * c;
        }
        stdv[j] = std::sqrt(ss / std::max<std::size_t>(split.train.size() - 1, 1));
        if (stdv[j] < 1e-8) stdv[j] = 1.0;  // constant column guard
    }

    FlowArch arch = arch_in;
    arch.quadrature_nodes = config.quadrature_nodes;
    FlowModel model = FlowModel::random(dag, arch, derive_seed(config.seed, "init"));
    model.set_standardization(mean, stdv);

    // Discrete labels, validated once.
    std::vector<int> discrete_cols;
    for (int j = 0; j < d; ++j)
        if (dag.node(j).kind == NodeKind::Discrete) discrete_cols.push_back(j);
    std::vector<std::vector<int>> labels(d);
    for (int j : discrete_cols) {
        labels[j].resize(n);
        for (int r = 0; r < n; ++r) {
            const double v = data.values(r, j);
            const int lab = static_cast<int>(std::llround(v));
            if (std::abs(v - lab) > 1e-9 || lab < 0 || lab >= dag.node(j).n_classes)
                throw LabelOutOfRange("fit: column " + dag.node(j).name +
                                      " has non-label value " + std::to_string(v));
            labels[j][r] = lab;
        }
    }

    // Rows gathered per split; discrete columns dequantized with the given
    // seed, then standardized.
    auto assemble = [&](const std::vector<int>& rows, std::uint64_t deq_seed) {
        Eigen::MatrixXd X(static_cast<int>(rows.size()), d);
        for (std::size_t r = 0; r < rows.size(); ++r)
            X.row(static_cast<int>(r)) = data.values.row(rows[r]);
        for (int j : discrete_cols) {
            DequantSpec spec{dag.node(j).n_classes, 1.0 / 36.0};
            Rng rng(derive_seed(deq_seed, "deq", j));
            const double sigma = std::sqrt(spec.sigma2);
            for (std::size_t r = 0; r < rows.size(); ++r)
                X(static_cast<int>(r), j) =
                    labels[j][rows[r]] + sigma * rng.normal();
        }
        return model.standardize(X);
    };

    const Eigen::MatrixXd val_X = assemble(split.val, derive_seed(config.seed, "val-deq"));
    const Eigen::MatrixXd test_X = assemble(split.test, derive_seed(config.seed, "test-deq"));

    std::vector<std::array<AdamW, 3>> opt(d);
    for (int i = 0; i < d; ++i)
        for (auto& o : opt[i]) {
            o.lr = config.learning_rate;
            o.weight_decay = config.weight_decay;
        }

    TrainLog log;
    std::vector<NodeNets> best_nets = model.nets();
    int since_best = 0;
    const int n_train = static_cast<int>(split.train.size());

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        Eigen::MatrixXd train_X =
            assemble(split.train, derive_seed(config.seed, "train-deq", epoch));
        std::vector<int> order(n_train);
        for (int r = 0; r < n_train; ++r) order[r] = r;
        Rng shuffle_rng(derive_seed(config.seed, "order", epoch));
        shuffle_rng.shuffle(order);

        double epoch_nll = 0.0;
        for (int start = 0; start < n_train; start += config.batch_size) {
            const int b = std::min(config.batch_size, n_train - start);
            Eigen::MatrixXd batch(b, d);
            for (int r = 0; r < b; ++r) batch.row(r) = train_X.row(order[start + r]);
            std::vector<std::array<MlpGrads, 3>> grads(d);
            const double batch_nll = detail::nll_backward_batch(model, batch, grads);
            epoch_nll += batch_nll * b;
            for (int i = 0; i < d; ++i) {
                opt[i][0].step(model.nets()[i].conditioner, grads[i][0]);
                opt[i][1].step(model.nets()[i].integrand, grads[i][1]);
                opt[i][2].step(model.nets()[i].offset, grads[i][2]);
            }
        }
        epoch_nll /= n_train;

        const double val_nll = -model.log_likelihood(val_X) / val_X.rows();
        if (!std::isfinite(val_nll)) throw DivergedLoss("validation NLL is non-finite");
        log.epochs.push_back({epoch_nll, val_nll});
        if (val_nll < log.best_val_nll) {
            log.best_val_nll = val_nll;
            log.best_epoch = epoch;
            best_nets = model.nets();
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
        log_debug("epoch " + std::to_string(epoch) + " train NLL " +
                  std::to_string(epoch_nll) + " val NLL " + std::to_string(val_nll));
    }

    model.nets() = std::move(best_nets);
    log.test_nll = -model.log_likelihood(test_X) / test_X.rows();

    TrainMeta& meta = model.meta();
    meta.trained = true;
    meta.seed = config.seed;
    meta.train_frac = config.train_frac;
    meta.val_frac = config.val_frac;
    meta.test_frac = config.test_frac;
    meta.n_data = n;
    meta.best_epoch = log.best_epoch;
    meta.epochs_run = static_cast<int>(log.epochs.size());
    meta.best_val_nll = log.best_val_nll;
    meta.test_nll = log.test_nll;
    log_info("fit: " + std::to_string(log.epochs.size()) + " epochs, best " +
             std::to_string(log.best_epoch) + ", val NLL " +
             std::to_string(log.best_val_nll) + ", test NLL " +
             std::to_string(log.test_nll));
    return {std::move(model), std::move(log)};
}

}  // namespace cgnf
