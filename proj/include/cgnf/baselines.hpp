// SPDX-License-Identifier: Apache-2.0
//
// Classical estimators benchmarked against the flow: stabilized IPW with a
// marginal structural model, regression-with-residuals (RWR), grouped
// conditional outcome models (GCOM), and GCOM with the correct functional
// form (GCOM_THETA). All are built on OLS/WLS and IRLS logistic fits.

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cgnf/common.hpp"
#include "cgnf/io.hpp"

namespace cgnf {

struct OlsFit {
    Eigen::VectorXd coef;
    Eigen::VectorXd fitted;
    Eigen::VectorXd residuals;
};

inline OlsFit ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    if (X.rows() != y.size()) throw ShapeMismatch("ols: row mismatch");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < X.cols()) throw SingularDesign("ols: rank-deficient design");
    OlsFit fit;
    fit.coef = qr.solve(y);
    fit.fitted = X * fit.coef;
    fit.residuals = y - fit.fitted;
    return fit;
}

inline OlsFit wls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& w) {
    Eigen::ArrayXd sw = w.array().sqrt();
    Eigen::MatrixXd Xw = (X.array().colwise() * sw).matrix();
    Eigen::VectorXd yw = (y.array() * sw).matrix();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
    if (qr.rank() < X.cols()) throw SingularDesign("wls: rank-deficient design");
    OlsFit fit;
    fit.coef = qr.solve(yw);
    fit.fitted = X * fit.coef;
    fit.residuals = y - fit.fitted;
    return fit;
}

struct LogisticFit {
    Eigen::VectorXd coef;
    int iterations = 0;
    double grad_norm = 0.0;
};

inline Eigen::VectorXd logistic_prob(const Eigen::MatrixXd& X,
                                     const Eigen::VectorXd& coef) {
    return (X * coef).unaryExpr([](double v) { return sigmoid(v); });
}

// IRLS to gradient max-norm < 1e-8 or 100 iterations.
inline LogisticFit logistic_irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    if (X.rows() != y.size()) throw ShapeMismatch("logistic: row mismatch");
    LogisticFit fit;
    fit.coef = Eigen::VectorXd::Zero(X.cols());
    for (int iter = 0; iter < 100; ++iter) {
        Eigen::VectorXd p = logistic_prob(X, fit.coef);
        Eigen::VectorXd grad = X.transpose() * (y - p);
        fit.grad_norm = grad.lpNorm<Eigen::Infinity>();
        fit.iterations = iter;
        if (fit.grad_norm < 1e-8) return fit;
        Eigen::ArrayXd w = (p.array() * (1.0 - p.array())).max(1e-10);
        Eigen::MatrixXd Xw = (X.array().colwise() * w).matrix();
        Eigen::MatrixXd H = X.transpose() * Xw;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        if (ldlt.info() != Eigen::Success)
            throw SingularDesign("logistic: singular information matrix");
        fit.coef += ldlt.solve(grad);
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Feature recipes: named transforms of dataset columns used to build design
// matrices. Supported terms: "C1", "A1*C1", "center(C1)",
// "resid(C2 ~ C1+A1)". An intercept column is always prepended.

struct FeatureRecipe {
    std::vector<std::string> terms;
};

namespace detail {
inline std::string strip(const std::string& s) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

inline Eigen::VectorXd eval_term(const SampleBatch& data, const std::string& raw);

inline Eigen::VectorXd eval_resid(const SampleBatch& data, const std::string& spec) {
    const auto tilde = spec.find('~');
    if (tilde == std::string::npos)
        throw Error("resid term needs 'target ~ predictors': " + spec);
    const std::string target = strip(spec.substr(0, tilde));
    Eigen::VectorXd y = data.col(target);
    std::vector<Eigen::VectorXd> cols;
    std::string rest = spec.substr(tilde + 1);
    std::size_t pos = 0;
    while (pos != std::string::npos) {
        auto next = rest.find('+', pos);
        std::string name = strip(next == std::string::npos
                                     ? rest.substr(pos)
                                     : rest.substr(pos, next - pos));
        if (!name.empty()) cols.push_back(eval_term(data, name));
        pos = next == std::string::npos ? next : next + 1;
    }
    Eigen::MatrixXd X(data.rows(), 1 + cols.size());
    X.col(0).setOnes();
    for (std::size_t k = 0; k < cols.size(); ++k) X.col(1 + k) = cols[k];
    return ols(X, y).residuals;
}

inline Eigen::VectorXd eval_term(const SampleBatch& data, const std::string& raw) {
    const std::string term = strip(raw);
    if (term.rfind("center(", 0) == 0 && term.back() == ')') {
        Eigen::VectorXd c = eval_term(data, term.substr(7, term.size() - 8));
        return (c.array() - c.mean()).matrix();
    }
    if (term.rfind("resid(", 0) == 0 && term.back() == ')')
        return eval_resid(data, term.substr(6, term.size() - 7));
    const auto star = term.find('*');
    if (star != std::string::npos) {
        Eigen::VectorXd a = eval_term(data, term.substr(0, star));
        Eigen::VectorXd b = eval_term(data, term.substr(star + 1));
        return (a.array() * b.array()).matrix();
    }
    return data.col(term);
}
}  // namespace detail

inline Eigen::MatrixXd build_design(const SampleBatch& data, const FeatureRecipe& recipe) {
    Eigen::MatrixXd X(data.rows(), 1 + recipe.terms.size());
    X.col(0).setOnes();
    for (std::size_t k = 0; k < recipe.terms.size(); ++k)
        X.col(1 + k) = detail::eval_term(data, recipe.terms[k]);
    return X;
}

// ---------------------------------------------------------------------------
// Estimators. All expect the 2-wave columns C1, A1, C2, A2, Y and return the
// three ATE contrasts.

struct AteTriple {
    double l10 = 0.0, l01 = 0.0, l11 = 0.0;
};

struct IpwDiagnostics {
    double clipped_fraction = 0.0;
    double weight_mean = 1.0;
    bool positivity_warning = false;
};

struct IpwSpec {
    FeatureRecipe a1_model{{"C1"}};
    FeatureRecipe a2_model{{"A1", "C2"}};
};

// Stabilized weights [P(A1) P(A2|A1)] / [P(A1|C1) P(A2|A1,C2)] at the
// observed treatments, then a weighted MSM of Y on (1, A1, A2, A1*A2).
inline AteTriple ipw_estimate(const SampleBatch& data, const IpwSpec& spec = {},
                              IpwDiagnostics* diagnostics = nullptr) {
    const int n = data.rows();
    Eigen::VectorXd a1 = data.col("A1");
    Eigen::VectorXd a2 = data.col("A2");
    Eigen::VectorXd y = data.col("Y");

    Eigen::MatrixXd X_den1 = build_design(data, spec.a1_model);
    Eigen::MatrixXd X_den2 = build_design(data, spec.a2_model);
    Eigen::MatrixXd X_num1 = build_design(data, FeatureRecipe{});
    Eigen::MatrixXd X_num2 = build_design(data, FeatureRecipe{{"A1"}});

    Eigen::VectorXd p_den1 = logistic_prob(X_den1, logistic_irls(X_den1, a1).coef);
    Eigen::VectorXd p_den2 = logistic_prob(X_den2, logistic_irls(X_den2, a2).coef);
    Eigen::VectorXd p_num1 = logistic_prob(X_num1, logistic_irls(X_num1, a1).coef);
    Eigen::VectorXd p_num2 = logistic_prob(X_num2, logistic_irls(X_num2, a2).coef);

    int clipped = 0;
    auto clip = [&](double p) {
        if (p < 1e-6 || p > 1.0 - 1e-6) ++clipped;
        return std::clamp(p, 1e-6, 1.0 - 1e-6);
    };
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) {
        auto at = [&](double p, double a) { return a > 0.5 ? p : 1.0 - p; };
        const double num = clip(at(p_num1[i], a1[i])) * clip(at(p_num2[i], a2[i]));
        const double den = clip(at(p_den1[i], a1[i])) * clip(at(p_den2[i], a2[i]));
        w[i] = num / den;
    }
    IpwDiagnostics diag;
    diag.clipped_fraction = static_cast<double>(clipped) / (4.0 * n);
    diag.weight_mean = w.mean();
    diag.positivity_warning = diag.clipped_fraction > 0.01;
    if (diag.positivity_warning)
        log_warn("ipw: clipping altered " + std::to_string(diag.clipped_fraction * 100) +
                 "% of propensities (positivity violation)");
    if (diagnostics) *diagnostics = diag;

    Eigen::MatrixXd msm(n, 4);
    msm.col(0).setOnes();
    msm.col(1) = a1;
    msm.col(2) = a2;
    msm.col(3) = (a1.array() * a2.array()).matrix();
    Eigen::VectorXd b = wls(msm, y, w).coef;
    return {b[1], b[2], b[2] + b[3]};
}

// Stage 1 residualizes the time-varying confounder; stage 2 regresses Y on
// (1, C1 - mean, A1, r2, A2, A1*A2).
inline AteTriple rwr_estimate(const SampleBatch& data) {
    const int n = data.rows();
    Eigen::VectorXd c1 = data.col("C1");
    Eigen::VectorXd a1 = data.col("A1");
    Eigen::VectorXd a2 = data.col("A2");
    Eigen::VectorXd y = data.col("Y");

    Eigen::MatrixXd stage1(n, 3);
    stage1.col(0).setOnes();
    stage1.col(1) = c1;
    stage1.col(2) = a1;
    Eigen::VectorXd r2 = ols(stage1, data.col("C2")).residuals;

    Eigen::MatrixXd X(n, 6);
    X.col(0).setOnes();
    X.col(1) = (c1.array() - c1.mean()).matrix();
    X.col(2) = a1;
    X.col(3) = r2;
    X.col(4) = a2;
    X.col(5) = (a1.array() * a2.array()).matrix();
    Eigen::VectorXd b = ols(X, y).coef;
    return {b[2], b[4], b[4] + b[5]};
}

// correct_form = false: one OLS of Y on (1, C1, C2) per (a1, a2) stratum,
// contrasts from predictions averaged over the full sample. correct_form =
// true: single OLS with the true interaction structure
// (1, C1 - mean, A1, A1*C1, r2, r2*C1, A2, A2*C1, A1*A2).
inline AteTriple gcom_estimate(const SampleBatch& data, bool correct_form) {
    const int n = data.rows();
    Eigen::VectorXd c1 = data.col("C1");
    Eigen::VectorXd c2 = data.col("C2");
    Eigen::VectorXd a1 = data.col("A1");
    Eigen::VectorXd a2 = data.col("A2");
    Eigen::VectorXd y = data.col("Y");

    double pred_mean[2][2];
    if (!correct_form) {
        for (int t1 = 0; t1 <= 1; ++t1)
            for (int t2 = 0; t2 <= 1; ++t2) {
                std::vector<int> rows;
                for (int i = 0; i < n; ++i)
                    if (a1[i] == t1 && a2[i] == t2) rows.push_back(i);
                if (rows.empty())
                    throw EmptyStratum("gcom: no units with (A1,A2) = (" +
                                       std::to_string(t1) + "," + std::to_string(t2) + ")");
                Eigen::MatrixXd Xs(rows.size(), 3);
                Eigen::VectorXd ys(rows.size());
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    Xs(r, 0) = 1.0;
                    Xs(r, 1) = c1[rows[r]];
                    Xs(r, 2) = c2[rows[r]];
                    ys[r] = y[rows[r]];
                }
                Eigen::VectorXd b = ols(Xs, ys).coef;
                double acc = 0.0;
                for (int i = 0; i < n; ++i) acc += b[0] + b[1] * c1[i] + b[2] * c2[i];
                pred_mean[t1][t2] = acc / n;
            }
    } else {
        Eigen::MatrixXd stage1(n, 3);
        stage1.col(0).setOnes();
        stage1.col(1) = c1;
        stage1.col(2) = a1;
        Eigen::VectorXd r2 = ols(stage1, c2).residuals;
        const double c1_mean = c1.mean();

        auto design_at = [&](const Eigen::VectorXd& t1, const Eigen::VectorXd& t2) {
            Eigen::MatrixXd X(n, 9);
            X.col(0).setOnes();
            X.col(1) = (c1.array() - c1_mean).matrix();
            X.col(2) = t1;
            X.col(3) = (t1.array() * c1.array()).matrix();
            X.col(4) = r2;
            X.col(5) = (r2.array() * c1.array()).matrix();
            X.col(6) = t2;
            X.col(7) = (t2.array() * c1.array()).matrix();
            X.col(8) = (t1.array() * t2.array()).matrix();
            return X;
        };
        Eigen::VectorXd b = ols(design_at(a1, a2), y).coef;
        for (int t1 = 0; t1 <= 1; ++t1)
            for (int t2 = 0; t2 <= 1; ++t2) {
                Eigen::VectorXd v1 = Eigen::VectorXd::Constant(n, t1);
                Eigen::VectorXd v2 = Eigen::VectorXd::Constant(n, t2);
                pred_mean[t1][t2] = (design_at(v1, v2) * b).mean();
            }
    }
    return {pred_mean[1][0] - pred_mean[0][0], pred_mean[0][1] - pred_mean[0][0],
            pred_mean[1][1] - pred_mean[1][0]};
}

}  // namespace cgnf
