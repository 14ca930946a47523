#pragma once

// Random instance generators and brute-force oracles shared by the test
// binaries. Nothing here calls into the homotopy code.

#include "conflasso/conflasso.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace conflasso::testing {

struct Instance {
    Dataset data;
    PenaltyConfig penalty;
    Vector x_new;
};

inline Matrix gaussian_matrix(std::mt19937_64& rng, Index rows, Index cols) {
    std::normal_distribution<double> N(0.0, 1.0);
    Matrix M(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) M(i, j) = N(rng);
    return M;
}

inline Vector gaussian_vector(std::mt19937_64& rng, Index n) { return gaussian_matrix(rng, n, 1).col(0); }

/// Sparse linear model with unit noise; lambda is lambda_max * 10^u with u
/// uniform on [log_lo, log_hi].
inline Instance random_instance(std::mt19937_64& rng, Index n, Index p, double rho, double log_lo = -2.7,
                                double log_hi = 0.3) {
    std::normal_distribution<double> N(0.0, 1.0);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    Matrix X = gaussian_matrix(rng, n, p);
    Vector beta = Vector::Zero(p);
    for (Index j = 0; j < std::min<Index>(p, 3); ++j) beta(j) = 2.0 * N(rng);
    Vector y = X * beta;
    for (Index i = 0; i < n; ++i) y(i) += N(rng);
    Dataset d(X, y);
    double lam = lambda_max(d) * std::pow(10.0, log_lo + (log_hi - log_lo) * U(rng));
    return Instance{d, PenaltyConfig{lam, rho}, gaussian_vector(rng, p)};
}

inline Index uniform_index(std::mt19937_64& rng, Index lo, Index hi) {
    std::uniform_int_distribution<Index> u(lo, hi);
    return u(rng);
}

/// Golden-section minimizer of a unimodal scalar function on [a, b].
template <class F>
double golden_min(F f, double a, double b, int iters = 200) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - g * (b - a);
    double d = a + g * (b - a);
    for (int k = 0; k < iters; ++k) {
        if (f(c) < f(d)) b = d;
        else a = c;
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    return 0.5 * (a + b);
}

inline double soft(double z, double g) { return z > g ? z - g : (z < -g ? z + g : 0.0); }

/// Membership of y by direct rank counting after a cold augmented fit.
inline bool brute_member(const Dataset& data, const Vector& x_new, double y, const PenaltyConfig& pen, double alpha) {
    return p_value(data, x_new, y, pen).count <= rank_threshold(data.n(), alpha);
}

}  // namespace conflasso::testing
