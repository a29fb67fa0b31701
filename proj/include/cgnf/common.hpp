// SPDX-License-Identifier: Apache-2.0
//
// Shared plumbing: error types, deterministic RNG, seed derivation, logging.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cgnf {

// ---------------------------------------------------------------------------
// Errors

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CycleDetected : Error { using Error::Error; };
struct DuplicateName : Error { using Error::Error; };
struct SelfLoop : Error { using Error::Error; };
struct IndexOutOfRange : Error { using Error::Error; };
struct UnknownNode : Error { using Error::Error; };
struct LabelOutOfRange : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct NonFiniteValue : Error { using Error::Error; };
struct BracketingFailed : Error { using Error::Error; };
struct InsufficientData : Error { using Error::Error; };
struct DivergedLoss : Error { using Error::Error; };
struct SingularDesign : Error { using Error::Error; };
struct EmptyStratum : Error { using Error::Error; };
struct StateSpaceTooLarge : Error { using Error::Error; };
struct MissingSidecar : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Logging. Level comes from the CGNF_LOG environment variable
// (debug|info|warn|error), default warn.

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3 };

inline LogLevel log_level() {
    static LogLevel level = [] {
        const char* env = std::getenv("CGNF_LOG");
        if (!env) return LogLevel::Warn;
        std::string_view s(env);
        if (s == "debug") return LogLevel::Debug;
        if (s == "info") return LogLevel::Info;
        if (s == "warn") return LogLevel::Warn;
        if (s == "error") return LogLevel::Error;
        return LogLevel::Warn;
    }();
    return level;
}

inline void log_msg(LogLevel level, const std::string& msg) {
    static const char* names[] = {"debug", "info", "warn", "error"};
    if (static_cast<int>(level) >= static_cast<int>(log_level()))
        std::fprintf(stderr, "[cgnf:%s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

inline void log_debug(const std::string& m) { log_msg(LogLevel::Debug, m); }
inline void log_info(const std::string& m) { log_msg(LogLevel::Info, m); }
inline void log_warn(const std::string& m) { log_msg(LogLevel::Warn, m); }

// ---------------------------------------------------------------------------
// Deterministic RNG. Distribution shapes are implemented here rather than via
// std::*_distribution so that streams are reproducible across standard
// libraries; report determinism depends on it.

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; one value per pair of uniforms.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Uniform integer in [0, n) by 128-bit multiply-shift.
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(gen_()) * n) >> 64);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::mt19937_64 gen_;
};

// splitmix64 finalizer, used for seed derivation.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the tag
    for (unsigned char c : tag) h = (h ^ c) * 0x100000001b3ull;
    return mix64(mix64(mix64(base ^ h) ^ a) ^ b);
}

// ---------------------------------------------------------------------------
// Scalar helpers

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

inline double softplus(double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double inverse_softplus(double y) { return std::log(std::expm1(y)); }

}  // namespace cgnf
