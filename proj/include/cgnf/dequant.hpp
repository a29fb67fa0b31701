// SPDX-License-Identifier: Apache-2.0
//
// Gaussian dequantization and quantization for discrete variables.
// Dequantize: D~ ~ N(mean = D, sigma^2), default sigma^2 = 1/36 so that the
// +-3 sigma band matches the rounding half-width of 0.5.
// Quantize: clamp(round(D~), 0, N-1) with round half away from zero.

#pragma once

#include <cmath>
#include <vector>

#include "cgnf/common.hpp"

namespace cgnf {

struct DequantSpec {
    int n_classes = 2;
    double sigma2 = 1.0 / 36.0;
};

inline std::vector<double> dequantize(const std::vector<int>& labels,
                                      const DequantSpec& spec, std::uint64_t seed) {
    if (spec.sigma2 < 0) throw Error("sigma2 must be >= 0");
    Rng rng(seed);
    const double sigma = std::sqrt(spec.sigma2);
    std::vector<double> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= spec.n_classes)
            throw LabelOutOfRange("label " + std::to_string(labels[i]) +
                                  " outside [0, " + std::to_string(spec.n_classes - 1) + "]");
        out[i] = static_cast<double>(labels[i]) + sigma * rng.normal();
    }
    return out;
}

inline int quantize_one(double value, const DequantSpec& spec) {
    double rounded = std::round(value);  // half away from zero
    if (rounded < 0.0) rounded = 0.0;
    const double top = static_cast<double>(spec.n_classes - 1);
    if (rounded > top) rounded = top;
    return static_cast<int>(rounded);
}

inline std::vector<int> quantize(const std::vector<double>& values,
                                 const DequantSpec& spec) {
    std::vector<int> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = quantize_one(values[i], spec);
    return out;
}

}  // namespace cgnf
