// SPDX-License-Identifier: Apache-2.0
//
// Minimal dense-network substrate: batched MLP forward/backward and the
// AdamW update. Batches are column-major (one sample per column) so layer
// application is a single GEMM.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cgnf/common.hpp"

namespace cgnf {

enum class Activation { Identity, ReLU, Elu };

inline std::string activation_name(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::ReLU: return "relu";
        case Activation::Elu: return "elu";
    }
    return "identity";
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "identity") return Activation::Identity;
    if (s == "relu") return Activation::ReLU;
    if (s == "elu") return Activation::Elu;
    throw Error("unknown activation: " + s);
}

namespace detail {
inline double act_apply(Activation a, double z) {
    switch (a) {
        case Activation::Identity: return z;
        case Activation::ReLU: return z > 0 ? z : 0.0;
        case Activation::Elu: return z > 0 ? z : std::expm1(z);
    }
    return z;
}
inline double act_deriv(Activation a, double z) {
    switch (a) {
        case Activation::Identity: return 1.0;
        case Activation::ReLU: return z > 0 ? 1.0 : 0.0;
        case Activation::Elu: return z > 0 ? 1.0 : std::exp(z);
    }
    return 1.0;
}
}  // namespace detail

struct Layer {
    Eigen::MatrixXd W;  // out x in
    Eigen::VectorXd b;  // out
    Activation act = Activation::Identity;
};

struct MlpCache {
    std::vector<Eigen::MatrixXd> inputs;  // per layer, in x B
    std::vector<Eigen::MatrixXd> pre;     // per layer, out x B (pre-activation)
};

struct MlpGrads {
    std::vector<Eigen::MatrixXd> dW;
    std::vector<Eigen::VectorXd> db;
};

class Mlp {
public:
    std::vector<Layer> layers;

    // widths = {in, hidden..., out}; hidden layers use `hidden`, last layer
    // `out`. Weights are Glorot-uniform, biases zero.
    static Mlp make(const std::vector<int>& widths, Activation hidden,
                    Activation out, Rng& rng) {
        Mlp net;
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            Layer layer;
            const int fan_in = widths[l], fan_out = widths[l + 1];
            const double bound = std::sqrt(6.0 / (fan_in + fan_out));
            layer.W.resize(fan_out, fan_in);
            for (int i = 0; i < fan_out; ++i)
                for (int j = 0; j < fan_in; ++j)
                    layer.W(i, j) = bound * (2.0 * rng.uniform() - 1.0);
            layer.b = Eigen::VectorXd::Zero(fan_out);
            layer.act = (l + 2 < widths.size()) ? hidden : out;
            net.layers.push_back(std::move(layer));
        }
        return net;
    }

    int input_width() const { return static_cast<int>(layers.front().W.cols()); }
    int output_width() const { return static_cast<int>(layers.back().W.rows()); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.W.size() + l.b.size();
        return n;
    }

    Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const {
        check_input(x);
        Eigen::MatrixXd a = x;
        for (const auto& layer : layers) {
            Eigen::MatrixXd z = (layer.W * a).colwise() + layer.b;
            a = z.unaryExpr([&](double v) { return detail::act_apply(layer.act, v); });
        }
        return a;
    }

    Eigen::MatrixXd forward_cached(const Eigen::MatrixXd& x, MlpCache& cache) const {
        check_input(x);
        cache.inputs.resize(layers.size());
        cache.pre.resize(layers.size());
        Eigen::MatrixXd a = x;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            cache.inputs[l] = a;
            Eigen::MatrixXd z = (layers[l].W * a).colwise() + layers[l].b;
            cache.pre[l] = z;
            a = z.unaryExpr([&](double v) { return detail::act_apply(layers[l].act, v); });
        }
        return a;
    }

    // Accumulates parameter gradients into `grads` and returns the gradient
    // with respect to the input batch.
    Eigen::MatrixXd backward(const MlpCache& cache, const Eigen::MatrixXd& upstream,
                             MlpGrads& grads) const {
        if (grads.dW.empty()) zero_like(grads);
        if (upstream.rows() != output_width() ||
            upstream.cols() != cache.inputs.front().cols())
            throw ShapeMismatch("backward: upstream gradient shape mismatch");
        Eigen::MatrixXd da = upstream;
        for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
            Eigen::MatrixXd dz =
                da.array() * cache.pre[l].unaryExpr([&](double v) {
                                 return detail::act_deriv(layers[l].act, v);
                             }).array();
            grads.dW[l].noalias() += dz * cache.inputs[l].transpose();
            grads.db[l] += dz.rowwise().sum();
            da.noalias() = layers[l].W.transpose() * dz;
        }
        return da;
    }

    void zero_like(MlpGrads& grads) const {
        grads.dW.resize(layers.size());
        grads.db.resize(layers.size());
        for (std::size_t l = 0; l < layers.size(); ++l) {
            grads.dW[l] = Eigen::MatrixXd::Zero(layers[l].W.rows(), layers[l].W.cols());
            grads.db[l] = Eigen::VectorXd::Zero(layers[l].b.size());
        }
    }

private:
    void check_input(const Eigen::MatrixXd& x) const {
        if (x.rows() != input_width())
            throw ShapeMismatch("forward: expected input width " +
                                std::to_string(input_width()) + ", got " +
                                std::to_string(x.rows()));
    }
};

// Decoupled weight-decay Adam with bias correction.
class AdamW {
public:
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;

    void step(Mlp& net, const MlpGrads& grads) {
        if (m_w_.empty()) init(net);
        if (m_w_.size() != net.layers.size())
            throw ShapeMismatch("adamw: state does not match network");
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1, t_);
        const double bc2 = 1.0 - std::pow(beta2, t_);
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            update(net.layers[l].W, grads.dW[l], m_w_[l], v_w_[l], bc1, bc2);
            update(net.layers[l].b, grads.db[l], m_b_[l], v_b_[l], bc1, bc2);
        }
    }

    long step_count() const { return t_; }

private:
    template <typename P, typename G>
    void update(P& p, const G& g, P& m, P& v, double bc1, double bc2) {
        if (p.rows() != g.rows() || p.cols() != g.cols())
            throw ShapeMismatch("adamw: gradient shape mismatch");
        m = beta1 * m + (1.0 - beta1) * g;
        v.array() = beta2 * v.array() + (1.0 - beta2) * g.array().square();
        p.array() -= lr * ((m.array() / bc1) / ((v.array() / bc2).sqrt() + eps) +
                           weight_decay * p.array());
    }

    void init(const Mlp& net) {
        m_w_.clear(); v_w_.clear(); m_b_.clear(); v_b_.clear();
        for (const auto& layer : net.layers) {
            m_w_.push_back(Eigen::MatrixXd::Zero(layer.W.rows(), layer.W.cols()));
            v_w_.push_back(Eigen::MatrixXd::Zero(layer.W.rows(), layer.W.cols()));
            m_b_.push_back(Eigen::VectorXd::Zero(layer.b.size()));
            v_b_.push_back(Eigen::VectorXd::Zero(layer.b.size()));
        }
    }

    long t_ = 0;
    std::vector<Eigen::MatrixXd> m_w_, v_w_;
    std::vector<Eigen::VectorXd> m_b_, v_b_;
};

}  // namespace cgnf
