// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "cgnf/nn.hpp"

using namespace cgnf;

namespace {

// Scalar loss sum(R .* f(x)) used for finite-difference checks.
double probe_loss(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& r) {
    return (net.forward(x).array() * r.array()).sum();
}

double max_rel_error(const Mlp& net, Eigen::MatrixXd x, const Eigen::MatrixXd& r) {
    MlpCache cache;
    MlpGrads grads;
    net.forward_cached(x, cache);
    net.backward(cache, r, grads);

    Mlp probe = net;
    const double h = 1e-4;
    double worst = 0.0;
    for (std::size_t l = 0; l < probe.layers.size(); ++l) {
        auto& W = probe.layers[l].W;
        for (int i = 0; i < W.rows(); ++i)
            for (int j = 0; j < W.cols(); ++j) {
                const double keep = W(i, j);
                W(i, j) = keep + h;
                const double up = probe_loss(probe, x, r);
                W(i, j) = keep - h;
                const double dn = probe_loss(probe, x, r);
                W(i, j) = keep;
                const double fd = (up - dn) / (2 * h);
                const double bp = grads.dW[l](i, j);
                const double denom = std::max({1e-6, std::abs(fd), std::abs(bp)});
                worst = std::max(worst, std::abs(fd - bp) / denom);
            }
        auto& b = probe.layers[l].b;
        for (int i = 0; i < b.size(); ++i) {
            const double keep = b[i];
            b[i] = keep + h;
            const double up = probe_loss(probe, x, r);
            b[i] = keep - h;
            const double dn = probe_loss(probe, x, r);
            b[i] = keep;
            const double fd = (up - dn) / (2 * h);
            const double bp = grads.db[l][i];
            const double denom = std::max({1e-6, std::abs(fd), std::abs(bp)});
            worst = std::max(worst, std::abs(fd - bp) / denom);
        }
    }
    return worst;
}

}  // namespace

TEST(Mlp, IdentityLayerPassesThrough) {
    Mlp net;
    Layer l;
    l.W = Eigen::MatrixXd::Identity(3, 3);
    l.b = Eigen::VectorXd::Zero(3);
    l.act = Activation::Identity;
    net.layers.push_back(l);
    Eigen::MatrixXd x(3, 2);
    x << 1, -2, 0.5, 3, -0.25, 0;
    EXPECT_TRUE(net.forward(x).isApprox(x, 1e-15));
}

TEST(Mlp, ZeroWeightsGiveActivatedBias) {
    Mlp net;
    Layer l;
    l.W = Eigen::MatrixXd::Zero(2, 3);
    l.b.resize(2);
    l.b << 0.5, -0.5;
    l.act = Activation::Elu;
    net.layers.push_back(l);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 4);
    Eigen::MatrixXd y = net.forward(x);
    for (int c = 0; c < 4; ++c) {
        EXPECT_NEAR(y(0, c), 0.5, 1e-15);
        EXPECT_NEAR(y(1, c), std::expm1(-0.5), 1e-15);
    }
}

// Two-layer 2x2 network against scalar arithmetic.
TEST(Mlp, HandComputedForward) {
    Mlp net;
    Layer l1;
    l1.W.resize(2, 2);
    l1.W << 1.0, 2.0, -1.0, 0.5;
    l1.b.resize(2);
    l1.b << 0.1, -0.2;
    l1.act = Activation::Elu;
    Layer l2;
    l2.W.resize(2, 2);
    l2.W << 0.3, -0.7, 1.5, 0.25;
    l2.b.resize(2);
    l2.b << 0.0, 0.4;
    l2.act = Activation::Identity;
    net.layers = {l1, l2};

    Eigen::MatrixXd x(2, 1);
    x << 0.2, -0.3;
    const double h1 = 0.2 * 1.0 + (-0.3) * 2.0 + 0.1;    // -0.3
    const double h2 = 0.2 * (-1.0) + (-0.3) * 0.5 - 0.2;  // -0.55
    const double a1 = std::expm1(h1);
    const double a2 = std::expm1(h2);
    const double o1 = 0.3 * a1 - 0.7 * a2;
    const double o2 = 1.5 * a1 + 0.25 * a2 + 0.4;

    Eigen::MatrixXd y = net.forward(x);
    EXPECT_NEAR(y(0, 0), o1, 1e-12);
    EXPECT_NEAR(y(1, 0), o2, 1e-12);
}

TEST(Mlp, ShapeMismatchRejected) {
    Rng rng(1);
    Mlp net = Mlp::make({3, 4, 2}, Activation::Elu, Activation::Identity, rng);
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(4, 1);
    EXPECT_THROW(net.forward(x), ShapeMismatch);
}

TEST(Mlp, GradientsMatchFiniteDifferencesOnSmallNets) {
    Rng rng(5);
    for (auto widths : std::vector<std::vector<int>>{{3, 4, 2}, {2, 5, 5, 1}, {1, 3, 1}}) {
        Mlp net = Mlp::make(widths, Activation::Elu, Activation::Identity, rng);
        Eigen::MatrixXd x(widths.front(), 3);
        for (int i = 0; i < x.rows(); ++i)
            for (int j = 0; j < x.cols(); ++j) x(i, j) = 2.0 * rng.uniform() - 1.0;
        Eigen::MatrixXd r(widths.back(), 3);
        for (int i = 0; i < r.rows(); ++i)
            for (int j = 0; j < r.cols(); ++j) r(i, j) = 2.0 * rng.uniform() - 1.0;
        EXPECT_LT(max_rel_error(net, x, r), 1e-3);
    }
}

// The architectures the flow instantiates: conditioner (d=5 -> [20,15] -> 10),
// integrand (11 -> [15,10,5] -> 1), offset (10 -> 1).
TEST(Mlp, GradientsMatchFiniteDifferencesOnFlowArchitectures) {
    Rng rng(9);
    for (auto widths : std::vector<std::vector<int>>{
             {5, 20, 15, 10}, {11, 15, 10, 5, 1}, {10, 1}}) {
        Mlp net = Mlp::make(widths, Activation::Elu, Activation::Identity, rng);
        Eigen::MatrixXd x(widths.front(), 2);
        for (int i = 0; i < x.rows(); ++i)
            for (int j = 0; j < x.cols(); ++j) x(i, j) = 2.0 * rng.uniform() - 1.0;
        Eigen::MatrixXd r(widths.back(), 2);
        for (int i = 0; i < r.rows(); ++i)
            for (int j = 0; j < r.cols(); ++j) r(i, j) = 2.0 * rng.uniform() - 1.0;
        EXPECT_LT(max_rel_error(net, x, r), 1e-3);
    }
}

TEST(Mlp, ZeroUpstreamGivesZeroGradients) {
    Rng rng(2);
    Mlp net = Mlp::make({3, 4, 2}, Activation::Elu, Activation::Identity, rng);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 4);
    MlpCache cache;
    net.forward_cached(x, cache);
    MlpGrads grads;
    Eigen::MatrixXd dx = net.backward(cache, Eigen::MatrixXd::Zero(2, 4), grads);
    EXPECT_EQ(dx.norm(), 0.0);
    for (const auto& dW : grads.dW) EXPECT_EQ(dW.norm(), 0.0);
    for (const auto& db : grads.db) EXPECT_EQ(db.norm(), 0.0);
}

TEST(Mlp, LinearNetInputGradientIsTransposeProduct) {
    Rng rng(3);
    Mlp net = Mlp::make({3, 2}, Activation::Identity, Activation::Identity, rng);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 5);
    Eigen::MatrixXd up = Eigen::MatrixXd::Random(2, 5);
    MlpCache cache;
    net.forward_cached(x, cache);
    MlpGrads grads;
    Eigen::MatrixXd dx = net.backward(cache, up, grads);
    EXPECT_TRUE(dx.isApprox(net.layers[0].W.transpose() * up, 1e-12));
}

TEST(AdamW, ZeroGradZeroDecayLeavesParamsUnchanged) {
    Rng rng(4);
    Mlp net = Mlp::make({2, 3, 1}, Activation::Elu, Activation::Identity, rng);
    Mlp before = net;
    AdamW opt;
    MlpGrads grads;
    net.zero_like(grads);
    opt.step(net, grads);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        EXPECT_TRUE(net.layers[l].W.isApprox(before.layers[l].W, 0));
        EXPECT_TRUE(net.layers[l].b.isApprox(before.layers[l].b, 0));
    }
}

// Bias-corrected first step moves by ~ lr * sign(g).
TEST(AdamW, FirstStepMovesByLearningRate) {
    Mlp net;
    Layer l;
    l.W = Eigen::MatrixXd::Constant(1, 1, 1.0);
    l.b = Eigen::VectorXd::Zero(1);
    l.act = Activation::Identity;
    net.layers.push_back(l);
    AdamW opt;
    opt.lr = 1e-3;
    MlpGrads grads;
    net.zero_like(grads);
    grads.dW[0](0, 0) = 1.0;
    opt.step(net, grads);
    EXPECT_NEAR(net.layers[0].W(0, 0), 1.0 - 1e-3, 1e-9);
}

// Decoupled decay with zero gradient: p <- p * (1 - lr * wd).
TEST(AdamW, DecayOnlyShrinksParameters) {
    Mlp net;
    Layer l;
    l.W = Eigen::MatrixXd::Constant(1, 1, 2.0);
    l.b = Eigen::VectorXd::Zero(1);
    l.act = Activation::Identity;
    net.layers.push_back(l);
    AdamW opt;
    opt.lr = 0.01;
    opt.weight_decay = 0.1;
    MlpGrads grads;
    net.zero_like(grads);
    opt.step(net, grads);
    EXPECT_NEAR(net.layers[0].W(0, 0), 2.0 * (1.0 - 0.01 * 0.1), 1e-12);
}
