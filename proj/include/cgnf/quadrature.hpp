// SPDX-License-Identifier: Apache-2.0
//
// Clenshaw-Curtis quadrature on [-1, 1]. Nodes are u_k = cos(k*pi/(q-1)),
// k = 0..q-1, so u_0 = 1 maps to the moving endpoint of [0, x] under the
// affine change of interval; weights are all positive and exact for
// polynomials up to degree q-1.

#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "cgnf/common.hpp"

namespace cgnf {

struct ClenshawCurtis {
    Eigen::VectorXd nodes;    // descending from 1 to -1
    Eigen::VectorXd weights;  // positive, sum to 2

    static ClenshawCurtis make(int q) {
        if (q < 2) throw Error("quadrature needs at least 2 nodes");
        const int n = q - 1;
        ClenshawCurtis cc;
        cc.nodes.resize(q);
        cc.weights.resize(q);
        for (int k = 0; k <= n; ++k) {
            cc.nodes[k] = std::cos(k * M_PI / n);
            double s = 0.0;
            for (int j = 1; j <= n / 2; ++j) {
                const double bj = (2 * j == n) ? 1.0 : 2.0;
                s += bj / (4.0 * j * j - 1.0) * std::cos(2.0 * j * k * M_PI / n);
            }
            const double ck = (k == 0 || k == n) ? 1.0 : 2.0;
            cc.weights[k] = ck / n * (1.0 - s);
        }
        return cc;
    }

    // Integral of f over [0, x] (signed) given f evaluated at t_k = x*(u_k+1)/2.
    double map_scale(double x) const { return 0.5 * x; }
};

}  // namespace cgnf
