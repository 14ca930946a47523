#pragma once

#include "conflasso/types.hpp"

#include <algorithm>
#include <vector>

namespace conflasso {

// Clamped B-spline basis on [lo, hi] with the given interior knots,
// evaluated by the Cox-de Boor recursion. Inputs outside [lo, hi] are
// clamped to the boundary.
class BSplineBasis {
public:
    BSplineBasis(int degree, double lo, double hi, std::vector<double> interior)
        : degree_(degree), lo_(lo), hi_(hi) {
        if (degree < 0 || !(lo < hi)) throw input_error("invalid B-spline configuration");
        std::sort(interior.begin(), interior.end());
        knots_.assign(static_cast<std::size_t>(degree + 1), lo);
        for (double k : interior) {
            if (!(k > lo && k < hi)) throw input_error("interior knot outside the boundary knots");
            knots_.push_back(k);
        }
        knots_.insert(knots_.end(), static_cast<std::size_t>(degree + 1), hi);
    }

    int degree() const { return degree_; }
    Index size() const { return static_cast<Index>(knots_.size()) - degree_ - 1; }
    const std::vector<double>& knots() const { return knots_; }

    Vector evaluate(double x) const {
        x = std::clamp(x, lo_, hi_);
        const std::size_t m = knots_.size();
        // Degree-0 indicators on [t_i, t_{i+1}); the right boundary belongs to
        // the last nonempty span.
        std::vector<double> N(m - 1, 0.0);
        std::size_t span = m - 1;
        for (std::size_t i = 0; i + 1 < m; ++i) {
            if (knots_[i] < knots_[i + 1] && knots_[i] <= x && x < knots_[i + 1]) {
                span = i;
                break;
            }
        }
        if (span == m - 1) {
            for (std::size_t i = m - 1; i-- > 0;)
                if (knots_[i] < knots_[i + 1]) {
                    span = i;
                    break;
                }
        }
        N[span] = 1.0;
        for (int d = 1; d <= degree_; ++d) {
            for (std::size_t i = 0; i + d + 1 < m; ++i) {
                double left = 0.0;
                double right = 0.0;
                double dl = knots_[i + d] - knots_[i];
                double dr = knots_[i + d + 1] - knots_[i + 1];
                if (dl > 0.0) left = (x - knots_[i]) / dl * N[i];
                if (dr > 0.0) right = (knots_[i + d + 1] - x) / dr * N[i + 1];
                N[i] = left + right;
            }
        }
        Vector out(size());
        for (Index i = 0; i < size(); ++i) out(i) = N[static_cast<std::size_t>(i)];
        return out;
    }

private:
    int degree_;
    double lo_;
    double hi_;
    std::vector<double> knots_;
};

/// Cubic basis used by the additive simulation model: boundary knots at
/// +-3 and one interior knot at the standard-normal median. The first of the
/// five functions is dropped, leaving 4 degrees of freedom.
inline const BSplineBasis& additive_model_basis() {
    static const BSplineBasis basis(3, -3.0, 3.0, {0.0});
    return basis;
}

inline Vector additive_model_features(double x) { return additive_model_basis().evaluate(x).tail(4); }

}  // namespace conflasso
