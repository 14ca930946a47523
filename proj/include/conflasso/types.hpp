#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace conflasso {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// Errors split along the CLI exit-code contract: input_error -> 2,
// numerical_error -> 3.
class input_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class numerical_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class dimension_mismatch : public input_error {
public:
    using input_error::input_error;
};

class non_convergence : public numerical_error {
public:
    non_convergence(const std::string& what, Index worst_coordinate, double violation)
        : numerical_error(what), worst_coordinate_(worst_coordinate), violation_(violation) {}
    Index worst_coordinate() const { return worst_coordinate_; }
    double violation() const { return violation_; }

private:
    Index worst_coordinate_;
    double violation_;
};

class singular_gram : public numerical_error {
public:
    using numerical_error::numerical_error;
};

/// Training sample: rows of X pair with entries of y.
class Dataset {
public:
    Dataset(Matrix X, Vector y) : X_(std::move(X)), y_(std::move(y)) {
        if (X_.rows() < 1 || X_.cols() < 1)
            throw input_error("dataset needs n >= 1 and p >= 1");
        if (X_.rows() != y_.size())
            throw dimension_mismatch("X has " + std::to_string(X_.rows()) + " rows but y has " +
                                     std::to_string(y_.size()) + " entries");
        if (!X_.allFinite() || !y_.allFinite())
            throw input_error("dataset contains non-finite values");
    }

    Index n() const { return X_.rows(); }
    Index p() const { return X_.cols(); }
    const Matrix& X() const { return X_; }
    const Vector& y() const { return y_; }

    /// Copy with (x, y) appended as row n+1.
    Dataset augmented(const Vector& x, double y) const {
        if (x.size() != p()) throw dimension_mismatch("appended covariate has wrong length");
        Matrix Xa(n() + 1, p());
        Xa.topRows(n()) = X_;
        Xa.row(n()) = x.transpose();
        Vector ya(n() + 1);
        ya.head(n()) = y_;
        ya(n()) = y;
        return Dataset(std::move(Xa), std::move(ya));
    }

    Dataset subset(const std::vector<Index>& rows) const {
        Matrix Xs(static_cast<Index>(rows.size()), p());
        Vector ys(static_cast<Index>(rows.size()));
        for (std::size_t k = 0; k < rows.size(); ++k) {
            Xs.row(static_cast<Index>(k)) = X_.row(rows[k]);
            ys(static_cast<Index>(k)) = y_(rows[k]);
        }
        return Dataset(std::move(Xs), std::move(ys));
    }

private:
    Matrix X_;
    Vector y_;
};

/// l1 weight lambda and l2 weight rho of the objective
///   1/2 sum_i (y_i - x_i'b)^2 + lambda |b|_1 + rho/2 |b|_2^2
/// Note there is no 1/n factor.
struct PenaltyConfig {
    double lambda = 1.0;
    double rho = 0.0;

    void validate() const {
        if (!(lambda > 0.0) || !std::isfinite(lambda))
            throw input_error("lambda must be strictly positive");
        if (!(rho >= 0.0) || !std::isfinite(rho))
            throw input_error("rho must be non-negative");
    }
};

inline double sign_of(double z) { return z > 0.0 ? 1.0 : (z < 0.0 ? -1.0 : 0.0); }

}  // namespace conflasso
