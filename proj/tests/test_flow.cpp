// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <optional>
#include <vector>

#include <gtest/gtest.h>

#include "cgnf/flow.hpp"
#include "cgnf/scm_sim.hpp"

using namespace cgnf;

namespace {

CausalDAG chain3_dag() {
    CausalDAG dag({NodeSpec::continuous("X1"), NodeSpec::continuous("X2"),
                   NodeSpec::continuous("X3")},
                  {{"X1", "X2"}, {"X2", "X3"}});
    dag.validate();
    return dag;
}

// Freeze integrand nets to g = 1 and offsets to 0: the flow becomes the
// identity map with zero log-determinant.
FlowModel make_identity_flow(const CausalDAG& dag, int q = 20) {
    FlowArch arch;
    arch.quadrature_nodes = q;
    FlowModel m = FlowModel::random(dag, arch, 123);
    const double bias = inverse_softplus(1.0 - kIntegrandFloor);
    for (auto& nets : m.nets()) {
        for (auto& layer : nets.integrand.layers) {
            layer.W.setZero();
            layer.b.setZero();
        }
        nets.integrand.layers.back().b[0] = bias;
        for (auto& layer : nets.offset.layers) {
            layer.W.setZero();
            layer.b.setZero();
        }
    }
    return m;
}

Eigen::MatrixXd random_points(int n, int d, std::uint64_t seed, double scale = 1.5) {
    Rng rng(seed);
    Eigen::MatrixXd X(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) X(i, j) = scale * rng.normal();
    return X;
}

}  // namespace

TEST(Quadrature, PolynomialExactness) {
    ClenshawCurtis cc = ClenshawCurtis::make(20);
    EXPECT_NEAR(cc.weights.sum(), 2.0, 1e-13);
    for (int k = 0; k < 20; ++k) EXPECT_GT(cc.weights[k], 0.0);
    // Integral of 1 + t^2 over [0, 1] = 4/3 via the affine map t = (u+1)/2.
    double acc = 0.0;
    for (int k = 0; k < 20; ++k) {
        const double t = 0.5 * (cc.nodes[k] + 1.0);
        acc += cc.weights[k] * (1.0 + t * t);
    }
    EXPECT_NEAR(0.5 * acc, 4.0 / 3.0, 1e-6);
    // Simpson special case q = 3.
    ClenshawCurtis s = ClenshawCurtis::make(3);
    EXPECT_NEAR(s.weights[0], 1.0 / 3.0, 1e-14);
    EXPECT_NEAR(s.weights[1], 4.0 / 3.0, 1e-14);
    EXPECT_NEAR(s.weights[2], 1.0 / 3.0, 1e-14);
}

TEST(Flow, IdentityFlowIsIdentityWithZeroLogdet) {
    FlowModel m = make_identity_flow(two_wave_dag());
    Eigen::VectorXd x(5);
    x << 0.3, -1.2, 0.8, 2.0, -0.4;
    auto res = m.transform_forward(x);
    EXPECT_TRUE(res.z.isApprox(x, 1e-9));
    EXPECT_NEAR(res.logdet, 0.0, 1e-9);
    // Inverse of z is z itself.
    Eigen::VectorXd back = m.transform_inverse(res.z);
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(back[i], x[i], 1e-5);
}

TEST(Flow, IdentityFlowLogDensityIsStandardNormal) {
    FlowModel m = make_identity_flow(two_wave_dag());
    Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, 5);
    EXPECT_NEAR(m.log_likelihood(zero), -2.5 * std::log(2.0 * M_PI), 1e-8);
    Eigen::MatrixXd X = random_points(20, 5, 77);
    double analytic = 0.0;
    for (int i = 0; i < X.rows(); ++i)
        analytic += -0.5 * X.row(i).squaredNorm() - 2.5 * std::log(2.0 * M_PI);
    EXPECT_NEAR(m.log_likelihood(X), analytic, 1e-7);
}

TEST(Flow, RoundTripInverseForwardOnRandomModel) {
    FlowModel m = FlowModel::random(two_wave_dag(), FlowArch{}, 42);
    Eigen::MatrixXd X = random_points(200, 5, 7);
    auto [Z, logdet] = m.forward_batch(X);
    Eigen::MatrixXd back = m.inverse_batch(Z);
    EXPECT_LT((back - X).cwiseAbs().maxCoeff(), 1e-4);
}

// Analytic logdet vs centered finite differences of the diagonal.
TEST(Flow, LogdetMatchesFiniteDifferenceJacobian) {
    FlowModel m = FlowModel::random(two_wave_dag(), FlowArch{}, 43);
    Eigen::MatrixXd X = random_points(10, 5, 9);
    const double h = 1e-5;
    for (int r = 0; r < X.rows(); ++r) {
        Eigen::VectorXd x = X.row(r).transpose();
        const double analytic = m.transform_forward(x).logdet;
        double fd_logdet = 0.0;
        for (int i = 0; i < 5; ++i) {
            Eigen::VectorXd up = x, dn = x;
            up[i] += h;
            dn[i] -= h;
            const double diag =
                (m.transform_forward(up).z[i] - m.transform_forward(dn).z[i]) / (2 * h);
            ASSERT_GT(diag, 0.0);
            fd_logdet += std::log(diag);
        }
        EXPECT_LT(std::abs(fd_logdet - analytic) /
                      std::max(1.0, std::abs(analytic)),
                  1e-3);
    }
}

// Perturbing a non-parent, non-self coordinate leaves z_i bit-identical.
TEST(Flow, GraphicalMaskingIsExact) {
    CausalDAG dag = two_wave_dag();
    FlowModel m = FlowModel::random(dag, FlowArch{}, 44);
    Eigen::VectorXd x(5);
    x << 0.5, 1.0, -0.7, 0.0, 1.3;
    auto base = m.transform_forward(x);
    // C2 (index 2) has parents {C1, A1}; A2 (3) and Y (4) are non-parents.
    for (int j : {3, 4}) {
        Eigen::VectorXd x2 = x;
        x2[j] += 10.0;
        auto res = m.transform_forward(x2);
        EXPECT_EQ(res.z[2], base.z[2]);
    }
    // A1 (index 1) has parent {C1}; perturbing C2/A2/Y leaves z_1 unchanged.
    for (int j : {2, 3, 4}) {
        Eigen::VectorXd x2 = x;
        x2[j] -= 3.0;
        auto res = m.transform_forward(x2);
        EXPECT_EQ(res.z[1], base.z[1]);
    }
}

// tau_i is strictly increasing in x_i for fixed parents.
TEST(Flow, TransformerMonotoneInOwnCoordinate) {
    FlowModel m = FlowModel::random(two_wave_dag(), FlowArch{}, 45);
    Rng rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::VectorXd x(5);
        for (int i = 0; i < 5; ++i) x[i] = 2.0 * rng.normal();
        for (int node = 0; node < 5; ++node) {
            double prev = -std::numeric_limits<double>::infinity();
            for (double v = -4.0; v <= 4.0; v += 0.25) {
                Eigen::VectorXd probe = x;
                probe[node] = v;
                const double z = m.transform_forward(probe).z[node];
                EXPECT_GT(z, prev);
                prev = z;
            }
        }
    }
}

TEST(Flow, InterventionClampsOverrideNoise) {
    FlowModel m = FlowModel::random(two_wave_dag(), FlowArch{}, 46);
    std::vector<std::optional<double>> clamps(5);
    clamps[1] = 0.73;   // A1
    clamps[3] = -0.21;  // A2
    Eigen::MatrixXd Z = random_points(50, 5, 12);
    Eigen::MatrixXd X = m.inverse_batch(Z, clamps);
    for (int r = 0; r < X.rows(); ++r) {
        EXPECT_EQ(X(r, 1), 0.73);
        EXPECT_EQ(X(r, 3), -0.21);
    }
}

// Full-parameter gradient of the mean minibatch NLL vs central differences
// on a tiny model (d=3, widths [4,4]/[4,4], Q=8).
TEST(Flow, NllGradientMatchesFiniteDifferences) {
    CausalDAG dag = chain3_dag();
    FlowArch arch;
    arch.embedding_width = 4;
    arch.conditioner_hidden = {4, 4};
    arch.integrand_hidden = {4, 4};
    arch.quadrature_nodes = 8;
    FlowModel m = FlowModel::random(dag, arch, 47);
    Eigen::MatrixXd X = random_points(4, 3, 21, 1.0);

    std::vector<std::array<MlpGrads, 3>> grads(3);
    detail::nll_backward_batch(m, X, grads);

    auto nll_of = [&](FlowModel& model) {
        return -model.log_likelihood(X) / X.rows();
    };
    const double h = 1e-4;
    double worst = 0.0;
    for (int node = 0; node < 3; ++node) {
        Mlp* nets[3] = {&m.nets()[node].conditioner, &m.nets()[node].integrand,
                        &m.nets()[node].offset};
        for (int which = 0; which < 3; ++which) {
            for (std::size_t l = 0; l < nets[which]->layers.size(); ++l) {
                auto& W = nets[which]->layers[l].W;
                for (int i = 0; i < W.rows(); ++i)
                    for (int j = 0; j < W.cols(); ++j) {
                        const double keep = W(i, j);
                        W(i, j) = keep + h;
                        const double up = nll_of(m);
                        W(i, j) = keep - h;
                        const double dn = nll_of(m);
                        W(i, j) = keep;
                        const double fd = (up - dn) / (2 * h);
                        const double bp = which == 0 ? grads[node][0].dW[l](i, j)
                                        : which == 1 ? grads[node][1].dW[l](i, j)
                                                     : grads[node][2].dW[l](i, j);
                        const double denom = std::max({1e-5, std::abs(fd), std::abs(bp)});
                        worst = std::max(worst, std::abs(fd - bp) / denom);
                    }
                auto& b = nets[which]->layers[l].b;
                for (int i = 0; i < b.size(); ++i) {
                    const double keep = b[i];
                    b[i] = keep + h;
                    const double up = nll_of(m);
                    b[i] = keep - h;
                    const double dn = nll_of(m);
                    b[i] = keep;
                    const double fd = (up - dn) / (2 * h);
                    const double bp = which == 0 ? grads[node][0].db[l][i]
                                    : which == 1 ? grads[node][1].db[l][i]
                                                 : grads[node][2].db[l][i];
                    const double denom = std::max({1e-5, std::abs(fd), std::abs(bp)});
                    worst = std::max(worst, std::abs(fd - bp) / denom);
                }
            }
        }
    }
    EXPECT_LT(worst, 1e-3);
}

// exp(log-density) of a fitted 1-D model integrates to 1 over [-10, 10]
// (a random-init model can park tail mass outside any finite window; the
// invariant is about a model whose transformer spans the base range).
TEST(Flow, OneDimensionalDensityNormalizes) {
    CausalDAG dag({NodeSpec::continuous("X")}, {});
    dag.validate();
    Rng rng(48);
    SampleBatch batch;
    batch.names = {"X"};
    batch.values.resize(2000, 1);
    for (int i = 0; i < 2000; ++i) batch.values(i, 0) = rng.normal();
    TrainConfig cfg;
    cfg.seed = 8;
    cfg.max_epochs = 15;
    cfg.patience = 15;
    FlowModel m = fit(dag, batch, cfg).first;
    const int n = 4001;
    const double lo = -10.0, hi = 10.0;
    const double dx = (hi - lo) / (n - 1);
    Eigen::MatrixXd grid(n, 1);
    for (int i = 0; i < n; ++i) grid(i, 0) = lo + i * dx;
    auto [Z, logdet] = m.forward_batch(grid);
    double integral = 0.0;  // Simpson
    for (int i = 0; i < n; ++i) {
        const double p =
            std::exp(-0.5 * Z(i, 0) * Z(i, 0) - 0.5 * std::log(2 * M_PI) + logdet[i]);
        const double w = (i == 0 || i == n - 1) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        integral += w * p;
    }
    integral *= dx / 3.0;
    EXPECT_NEAR(integral, 1.0, 1e-3);
}

TEST(Flow, BracketingFailureIsReported) {
    CausalDAG dag({NodeSpec::continuous("X")}, {});
    dag.validate();
    FlowModel m = make_identity_flow(dag);
    // Force g to its positivity floor: tau(x) = eps * x cannot reach z = 1e30
    // within 64 doublings.
    m.nets()[0].integrand.layers.back().b[0] = -60.0;
    Eigen::VectorXd z(1);
    z << 1e30;
    EXPECT_THROW(m.transform_inverse(z), BracketingFailed);
}

TEST(Flow, NonFiniteInputRejected) {
    FlowModel m = FlowModel::random(two_wave_dag(), FlowArch{}, 49);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(5);
    x[2] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(m.transform_forward(x), NonFiniteValue);
}

TEST(Flow, SaveLoadReproducesLogLikelihoodBitExactly) {
    FlowModel m = FlowModel::random(two_wave_dag(), FlowArch{}, 50);
    Eigen::VectorXd mean(5), stdv(5);
    mean << 0.1, 0.5, -0.2, 0.4, 1.7;
    stdv << 1.1, 0.5, 1.4, 0.49, 1.23;
    m.set_standardization(mean, stdv);
    Eigen::MatrixXd X = random_points(64, 5, 33);
    const double ll = m.log_likelihood(X);
    const std::string path = testing::TempDir() + "cgnf_model.json";
    m.save(path);
    FlowModel loaded = FlowModel::load(path);
    EXPECT_EQ(loaded.log_likelihood(X), ll);
    EXPECT_EQ(loaded.column_mean()[4], 1.7);
    std::remove(path.c_str());
}

TEST(Split, DeterministicAndProportional) {
    DataSplit s1 = split_indices(10, 5, 0.8, 0.1);
    DataSplit s2 = split_indices(10, 5, 0.8, 0.1);
    EXPECT_EQ(s1.train, s2.train);
    EXPECT_EQ(s1.val, s2.val);
    EXPECT_EQ(s1.test, s2.test);
    EXPECT_EQ(s1.train.size(), 8u);
    EXPECT_EQ(s1.val.size(), 1u);
    EXPECT_EQ(s1.test.size(), 1u);
    DataSplit s3 = split_indices(2000, 7, 0.8, 0.1);
    EXPECT_EQ(s3.train.size(), 1600u);
    EXPECT_EQ(s3.val.size(), 200u);
    EXPECT_EQ(s3.test.size(), 200u);
}

TEST(Fit, InsufficientDataRejected) {
    CausalDAG dag({NodeSpec::continuous("X")}, {});
    dag.validate();
    SampleBatch batch;
    batch.names = {"X"};
    batch.values = Eigen::MatrixXd::Random(5, 1);
    TrainConfig cfg;
    cfg.max_epochs = 1;
    EXPECT_THROW(fit(dag, batch, cfg), InsufficientData);
}

// Trained on a 1-D standard normal sample, held-out NLL approaches the
// analytic differential entropy 0.5*log(2*pi*e) ~ 1.4189.
TEST(Fit, OneDimensionalStandardNormalEntropy) {
    CausalDAG dag({NodeSpec::continuous("X")}, {});
    dag.validate();
    const int n = 5000;
    Rng rng(55);
    SampleBatch batch;
    batch.names = {"X"};
    batch.values.resize(n, 1);
    for (int i = 0; i < n; ++i) batch.values(i, 0) = rng.normal();
    TrainConfig cfg;
    cfg.seed = 3;
    cfg.max_epochs = 60;
    cfg.patience = 8;
    auto [model, log] = fit(dag, batch, cfg);

    // Early stopping: the snapshot's validation NLL bounds the final epoch's.
    ASSERT_GE(log.epochs.size(), 2u);
    EXPECT_LE(log.best_val_nll, log.epochs.back().val_nll);

    // Raw-space NLL adds the standardization log-Jacobian.
    const double correction = std::log(model.column_std()[0]);
    const double entropy = 0.5 * std::log(2.0 * M_PI * std::exp(1.0));
    EXPECT_NEAR(log.test_nll + correction, entropy, 0.05);
}

// Linear-Gaussian chain: held-out NLL within 0.1 nats/dimension of the
// analytic joint entropy 3 * 0.5 * log(2*pi*e).
TEST(Fit, LinearGaussianChainEntropy) {
    CausalDAG dag = chain3_dag();
    const int n = 3000;
    Rng rng(66);
    SampleBatch batch;
    batch.names = {"X1", "X2", "X3"};
    batch.values.resize(n, 3);
    for (int i = 0; i < n; ++i) {
        const double x1 = rng.normal();
        const double x2 = 0.8 * x1 + rng.normal();
        const double x3 = 0.6 * x2 + rng.normal();
        batch.values(i, 0) = x1;
        batch.values(i, 1) = x2;
        batch.values(i, 2) = x3;
    }
    TrainConfig cfg;
    cfg.seed = 4;
    cfg.max_epochs = 100;
    cfg.patience = 10;
    auto [model, log] = fit(dag, batch, cfg);
    double correction = 0.0;
    for (int j = 0; j < 3; ++j) correction += std::log(model.column_std()[j]);
    const double entropy_per_dim = 0.5 * std::log(2.0 * M_PI * std::exp(1.0));
    const double nll_per_dim = (log.test_nll + correction) / 3.0;
    EXPECT_NEAR(nll_per_dim, entropy_per_dim, 0.1);
}
