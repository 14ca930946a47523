#pragma once

#include "conflasso/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace conflasso {

/// KKT-certified solution of
///   1/2 |y - X b|^2 + lambda |b|_1 + rho/2 |b|^2.
/// `dual` is the stationarity residual X'(y - X b) - rho b, which equals
/// sign(b_j) lambda on the support and lies in [-lambda, lambda] off it.
struct LassoFit {
    Vector beta;
    std::vector<Index> active;  // ascending
    Vector dual;
    PenaltyConfig penalty;
    double objective = 0.0;
    Index sweeps = 0;
    // Inactive coordinates whose dual sits on the boundary |v_j| = lambda.
    std::vector<Index> boundary_ties;
};

struct KktReport {
    double active_violation = 0.0;
    double inactive_excess = 0.0;
    Index worst_coordinate = -1;
    bool pass = false;
};

struct SolverOptions {
    double update_tol = 1e-10;
    double kkt_tol = 1e-8;
    Index max_sweeps = 100000;
    // Relative width of the band below lambda in which an inactive dual is
    // reported as a boundary tie.
    double tie_tol = 1e-9;
};

inline double soft_threshold(double z, double gamma) {
    if (z > gamma) return z - gamma;
    if (z < -gamma) return z + gamma;
    return 0.0;
}

inline double objective_value(const Dataset& data, const Vector& beta, const PenaltyConfig& penalty) {
    return 0.5 * (data.y() - data.X() * beta).squaredNorm() + penalty.lambda * beta.lpNorm<1>() +
           0.5 * penalty.rho * beta.squaredNorm();
}

inline Vector dual_of(const Dataset& data, const Vector& beta, const PenaltyConfig& penalty) {
    if (beta.size() != data.p())
        throw dimension_mismatch("beta has length " + std::to_string(beta.size()) + ", expected " +
                                 std::to_string(data.p()));
    return data.X().transpose() * (data.y() - data.X() * beta) - penalty.rho * beta;
}

inline std::vector<Index> support_of(const Vector& beta) {
    std::vector<Index> J;
    for (Index j = 0; j < beta.size(); ++j)
        if (beta(j) != 0.0) J.push_back(j);
    return J;
}

inline KktReport check_kkt(const Vector& beta, const Vector& dual, double lambda, double tol) {
    KktReport r;
    double worst = -1.0;
    for (Index j = 0; j < beta.size(); ++j) {
        double viol;
        if (beta(j) != 0.0) {
            viol = std::abs(dual(j) - sign_of(beta(j)) * lambda);
            r.active_violation = std::max(r.active_violation, viol);
        } else {
            viol = std::max(0.0, std::abs(dual(j)) - lambda);
            r.inactive_excess = std::max(r.inactive_excess, viol);
        }
        if (viol > worst) {
            worst = viol;
            r.worst_coordinate = j;
        }
    }
    r.pass = r.active_violation <= tol && r.inactive_excess <= tol;
    return r;
}

inline KktReport check_kkt(const Dataset& data, const LassoFit& fit, double tol) {
    if (fit.beta.size() != data.p()) throw dimension_mismatch("fit does not match data");
    return check_kkt(fit.beta, dual_of(data, fit.beta, fit.penalty), fit.penalty.lambda, tol);
}

namespace detail {

// Re-solve the stationarity equations on a fixed signed support. Coordinate
// descent identifies the support; this removes its residual error.
inline std::optional<Vector> polish_on_support(const Dataset& data, const Vector& beta,
                                               const PenaltyConfig& penalty) {
    std::vector<Index> J = support_of(beta);
    Vector out = Vector::Zero(data.p());
    if (J.empty()) return out;
    Index m = static_cast<Index>(J.size());
    Matrix XJ(data.n(), m);
    Vector s(m);
    for (Index k = 0; k < m; ++k) {
        XJ.col(k) = data.X().col(J[k]);
        s(k) = sign_of(beta(J[k]));
    }
    Matrix A = XJ.transpose() * XJ;
    A.diagonal().array() += penalty.rho;
    Vector rhs = XJ.transpose() * data.y() - penalty.lambda * s;
    Eigen::LLT<Matrix> llt(A);
    if (llt.info() != Eigen::Success) return std::nullopt;
    Vector bJ = llt.solve(rhs);
    for (Index k = 0; k < m; ++k) {
        if (sign_of(bJ(k)) != s(k)) return std::nullopt;
        out(J[k]) = bJ(k);
    }
    return out;
}

}  // namespace detail

inline LassoFit make_fit(const Dataset& data, Vector beta, const PenaltyConfig& penalty,
                         const SolverOptions& opt = {}) {
    LassoFit fit;
    fit.dual = dual_of(data, beta, penalty);
    fit.beta = std::move(beta);
    fit.active = support_of(fit.beta);
    fit.penalty = penalty;
    fit.objective = objective_value(data, fit.beta, penalty);
    for (Index j = 0; j < fit.beta.size(); ++j)
        if (fit.beta(j) == 0.0 && std::abs(fit.dual(j)) >= penalty.lambda * (1.0 - opt.tie_tol))
            fit.boundary_ties.push_back(j);
    return fit;
}

/// Cyclic coordinate descent with active-set cycling, followed by an exact
/// re-solve on the identified signed support.
inline LassoFit fit(const Dataset& data, const PenaltyConfig& penalty, const SolverOptions& opt = {},
                    const Vector* warm_start = nullptr) {
    penalty.validate();
    const Matrix& X = data.X();
    const Index p = data.p();
    const double lambda = penalty.lambda;
    const double rho = penalty.rho;

    if (!warm_start && lambda >= (X.transpose() * data.y()).cwiseAbs().maxCoeff())
        return make_fit(data, Vector::Zero(p), penalty, opt);

    Vector col_sq = X.colwise().squaredNorm().transpose();
    Vector beta = Vector::Zero(p);
    if (warm_start) {
        if (warm_start->size() != p) throw dimension_mismatch("warm start has wrong length");
        beta = *warm_start;
    }
    Vector resid = data.y() - X * beta;

    auto update = [&](Index j) {
        double denom = col_sq(j) + rho;
        if (denom <= 0.0) return 0.0;
        double old = beta(j);
        double z = X.col(j).dot(resid) + col_sq(j) * old;
        double next = soft_threshold(z, lambda) / denom;
        double delta = next - old;
        if (delta != 0.0) {
            resid.noalias() -= delta * X.col(j);
            beta(j) = next;
        }
        return std::abs(delta);
    };

    Index sweeps = 0;
    bool converged = false;
    std::vector<Index> active;
    while (sweeps < opt.max_sweeps) {
        double full_change = 0.0;
        for (Index j = 0; j < p; ++j) full_change = std::max(full_change, update(j));
        ++sweeps;
        if (full_change < opt.update_tol) {
            converged = true;
            break;
        }
        active = support_of(beta);
        while (sweeps < opt.max_sweeps) {
            double change = 0.0;
            for (Index j : active) change = std::max(change, update(j));
            ++sweeps;
            if (change < opt.update_tol) break;
        }
    }

    if (auto polished = detail::polish_on_support(data, beta, penalty)) {
        Vector v = dual_of(data, *polished, penalty);
        if (check_kkt(*polished, v, lambda, opt.kkt_tol).pass) beta = *polished;
    }

    LassoFit result = make_fit(data, std::move(beta), penalty, opt);
    result.sweeps = sweeps;
    KktReport report = check_kkt(result.beta, result.dual, lambda, opt.kkt_tol);
    if (!report.pass) {
        // Scale-aware second chance: the dual is O(|X'y|), so allow relative error.
        double scale = std::max(1.0, (X.transpose() * data.y()).cwiseAbs().maxCoeff());
        if (!converged || !check_kkt(result.beta, result.dual, lambda, opt.kkt_tol * scale).pass)
            throw non_convergence("lasso solver did not reach KKT tolerance after " +
                                      std::to_string(sweeps) + " sweeps (worst coordinate " +
                                      std::to_string(report.worst_coordinate) + ")",
                                  report.worst_coordinate,
                                  std::max(report.active_violation, report.inactive_excess));
    }
    return result;
}

/// Smallest lambda that yields the all-zero solution.
inline double lambda_max(const Dataset& data) {
    return (data.X().transpose() * data.y()).cwiseAbs().maxCoeff();
}

}  // namespace conflasso
