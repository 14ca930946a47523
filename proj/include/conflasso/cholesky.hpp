#pragma once

#include "conflasso/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace conflasso {

// Lower Cholesky factor L (M = L L') of a symmetric positive definite
// matrix whose rows/columns can be appended or removed one at a time.
// Appending is a bordered forward solve; removal restores triangularity
// with a sweep of Givens rotations over the trailing block.
class UpdatableCholesky {
public:
    Index size() const { return m_; }

    void clear() {
        m_ = 0;
        updates_since_refactor_ = 0;
    }

    /// Append a row/column. `cross` holds M(0..m-1, new), `diag` holds M(new, new).
    /// Returns false (and leaves the factor unchanged) when the pivot is not positive.
    bool append(const Vector& cross, double diag) {
        reserve(m_ + 1);
        Vector l = Vector::Zero(m_);
        if (m_ > 0)
            l = L_.topLeftCorner(m_, m_).triangularView<Eigen::Lower>().solve(cross);
        double pivot = diag - l.squaredNorm();
        if (!(pivot > diag * 1e-14) || !std::isfinite(pivot)) return false;
        L_.row(m_).head(m_) = l.transpose();
        L_(m_, m_) = std::sqrt(pivot);
        ++m_;
        ++updates_since_refactor_;
        return true;
    }

    /// Remove row/column k.
    void remove(Index k) {
        Matrix& R = L_;
        for (Index i = k; i + 1 < m_; ++i) R.row(i).head(m_) = R.row(i + 1).head(m_);
        Index rows = m_ - 1;
        for (Index c = k; c < rows; ++c) {
            double a = R(c, c);
            double b = R(c, c + 1);
            double h = std::hypot(a, b);
            if (h == 0.0) continue;
            double cs = a / h;
            double sn = b / h;
            for (Index i = c; i < rows; ++i) {
                double u = R(i, c);
                double w = R(i, c + 1);
                R(i, c) = cs * u + sn * w;
                R(i, c + 1) = -sn * u + cs * w;
            }
        }
        for (Index i = 0; i < rows; ++i) R(i, rows) = 0.0;
        m_ = rows;
        for (Index i = 0; i < m_; ++i)
            if (R(i, i) < 0.0) R.col(i).segment(i, m_ - i) *= -1.0;
        ++updates_since_refactor_;
    }

    /// Factor from scratch. Returns false if M is not numerically positive definite.
    bool refactor(const Matrix& M) {
        m_ = 0;
        updates_since_refactor_ = 0;
        if (M.rows() == 0) return true;
        Eigen::LLT<Matrix> llt(M);
        if (llt.info() != Eigen::Success) return false;
        reserve(M.rows());
        m_ = M.rows();
        L_.topLeftCorner(m_, m_) = llt.matrixL();
        return condition_estimate() < 1e12;
    }

    Vector solve(const Vector& b) const {
        if (m_ == 0) return Vector(0);
        auto L = L_.topLeftCorner(m_, m_);
        Vector z = L.triangularView<Eigen::Lower>().solve(b);
        return L.transpose().triangularView<Eigen::Upper>().solve(z);
    }

    /// Squared ratio of extreme pivots; a cheap lower bound on cond(M).
    double condition_estimate() const {
        if (m_ == 0) return 1.0;
        auto d = L_.topLeftCorner(m_, m_).diagonal().cwiseAbs();
        double lo = d.minCoeff();
        double hi = d.maxCoeff();
        if (lo == 0.0) return std::numeric_limits<double>::infinity();
        return (hi / lo) * (hi / lo);
    }

    Index updates_since_refactor() const { return updates_since_refactor_; }

    Matrix reconstruct() const {
        auto L = L_.topLeftCorner(m_, m_);
        return L * L.transpose();
    }

private:
    void reserve(Index m) {
        if (L_.rows() >= m) return;
        Index cap = std::max<Index>(m, 2 * L_.rows());
        Matrix grown = Matrix::Zero(cap, cap);
        if (m_ > 0) grown.topLeftCorner(m_, m_) = L_.topLeftCorner(m_, m_);
        L_ = std::move(grown);
    }

    Matrix L_;
    Index m_ = 0;
    Index updates_since_refactor_ = 0;
};

}  // namespace conflasso
