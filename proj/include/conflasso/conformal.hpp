#pragma once

#include "conflasso/homotopy.hpp"
#include "conflasso/lasso.hpp"
#include "conflasso/types.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

namespace conflasso {

enum class BoundarySource { RankCrossing, Breakpoint, RangeClip, GridCell, SplitQuantile };

inline const char* to_string(BoundarySource s) {
    switch (s) {
        case BoundarySource::RankCrossing: return "rank_crossing";
        case BoundarySource::Breakpoint: return "breakpoint";
        case BoundarySource::RangeClip: return "range_clip";
        case BoundarySource::GridCell: return "grid_cell";
        case BoundarySource::SplitQuantile: return "split_quantile";
    }
    return "?";
}

/// Half-open interval [lo, hi) on the response axis.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    BoundarySource lo_source = BoundarySource::RangeClip;
    BoundarySource hi_source = BoundarySource::RangeClip;
};

struct PredictionSet {
    std::vector<Interval> intervals;  // sorted, disjoint, nonempty
    double alpha = 0.1;
    bool is_single_interval = false;
    // True when max_i |cross leverage| < 1 held on every traced segment.
    bool interval_condition_held = true;
    bool clipped_infinite = false;  // split: requested rank exceeded holdout size
    Index n_segments = 0;
    Index n_fallbacks = 0;
    double runtime_ms = 0.0;

    bool contains(double y) const {
        for (const auto& iv : intervals)
            if (iv.lo <= y && y < iv.hi) return true;
        return false;
    }

    double length() const {
        double total = 0.0;
        for (const auto& iv : intervals) total += iv.hi - iv.lo;
        return total;
    }
};

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

/// Sample range of y widened by a quarter of its width on each side; a
/// constant response widens by 1 instead.
inline Range default_range(const Vector& y) {
    if (y.size() == 0) throw input_error("default_range needs at least one response");
    double lo = y.minCoeff();
    double hi = y.maxCoeff();
    double w = hi - lo;
    if (w == 0.0) return {lo - 1.0, hi + 1.0};
    return {lo - 0.25 * w, hi + 0.25 * w};
}

/// Largest admissible rank ceil((n+1)(1-alpha)) of the candidate's absolute
/// residual, counting itself and ties. The guard absorbs rounding such as
/// 10 * 0.9 = 9.000000000000002.
inline Index rank_threshold(Index n, double alpha) {
    double x = static_cast<double>(n + 1) * (1.0 - alpha);
    return static_cast<Index>(std::ceil(x - 1e-9 * std::max(1.0, x)));
}

inline void validate_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw input_error("alpha must lie in (0, 1)");
}

struct PValue {
    double p = 1.0;
    Index count = 1;  // #{i <= n+1 : |r_i| <= |r_{n+1}|}
};

/// Conformal p-value of candidate response y at x_new from a cold fit on the
/// augmented data: the fraction of the n+1 points whose absolute residual is
/// at least the candidate's, i.e. (n + 2 - count) / (n + 1).
inline PValue p_value(const Dataset& data, const Vector& x_new, double y, const PenaltyConfig& penalty,
                      const SolverOptions& opt = {}) {
    if (!std::isfinite(y)) throw input_error("candidate response must be finite");
    Dataset aug = data.augmented(x_new, y);
    LassoFit f = fit(aug, penalty, opt);
    Vector r = (aug.y() - aug.X() * f.beta).cwiseAbs();
    const Index n = data.n();
    double own = r(n);
    PValue out;
    out.count = 1;
    for (Index i = 0; i < n; ++i)
        if (r(i) <= own) ++out.count;
    out.p = static_cast<double>(n + 2 - out.count) / static_cast<double>(n + 1);
    return out;
}

/// Cross-leverage test max_i |x_{i,J}' (G_J + rho I)^{-1} x_{new,J}| < 1.
inline bool interval_condition(const Dataset& data, const Vector& x_new, const std::vector<Index>& J, double rho) {
    if (J.empty()) return true;
    Matrix M = detail::gram_block(data.X(), J, rho);
    Eigen::LDLT<Matrix> ldlt(M);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-12 * ldlt.vectorD().maxCoeff())
        throw singular_gram("Gram submatrix on the active set is singular");
    Index m = static_cast<Index>(J.size());
    Vector xJ(m);
    Matrix XJ(data.n(), m);
    for (Index k = 0; k < m; ++k) {
        xJ(k) = x_new(J[static_cast<std::size_t>(k)]);
        XJ.col(k) = data.X().col(J[static_cast<std::size_t>(k)]);
    }
    Vector lev = XJ * ldlt.solve(xJ);
    return lev.cwiseAbs().maxCoeff() < 1.0;
}

/// Residual trajectories on one segment: r_i(t) = intercept_i + slope_i (t - t_anchor)
/// for the n training points, and the same for the appended point.
struct ResidualTrajectory {
    double t_anchor = 0.0;
    Vector intercepts;
    Vector slopes;
    double new_intercept = 0.0;
    double new_slope = 1.0;

    double new_at(double t) const { return new_intercept + new_slope * (t - t_anchor); }

    Index count_at(double t) const {
        double own = std::abs(new_at(t));
        Index c = 1;
        double dt = t - t_anchor;
        for (Index i = 0; i < intercepts.size(); ++i)
            if (std::abs(intercepts(i) + slopes(i) * dt) <= own) ++c;
        return c;
    }
};

inline ResidualTrajectory residual_trajectory(const Dataset& data, const QueryPoint& query,
                                              const HomotopySegment& seg) {
    ResidualTrajectory tr;
    tr.t_anchor = seg.t_start;
    tr.intercepts = data.y() - data.X() * seg.beta_anchor;
    tr.slopes = Vector::Zero(data.n());
    for (std::size_t k = 0; k < seg.active.size(); ++k)
        tr.slopes.noalias() -= seg.eta(static_cast<Index>(k)) * data.X().col(seg.active[k]);
    tr.new_intercept = query.y_hat0 + seg.t_start - query.x_new.dot(seg.beta_anchor);
    tr.new_slope = seg.new_residual_slope;
    return tr;
}

struct ConformalOptions {
    bool fast = false;
    // Stop each direction once the interval containing the base prediction is closed.
    bool early_stop_anchor = false;
    HomotopyOptions homotopy;
};

namespace detail {

struct Piece {
    double lo;
    double hi;
    BoundarySource lo_source;
    BoundarySource hi_source;
};

// Rank-crossing enumeration on [a, b): every root of |r_{n+1}| = |r_i| splits
// the segment, and each sub-interval is classified at its midpoint.
inline void general_pieces(const ResidualTrajectory& tr, double a, double b, Index K, std::vector<Piece>& out) {
    std::vector<double> roots;
    const double dA = tr.new_intercept + tr.new_slope * (a - tr.t_anchor);
    for (Index i = 0; i < tr.intercepts.size(); ++i) {
        double ri = tr.intercepts(i) + tr.slopes(i) * (a - tr.t_anchor);
        for (double sgn : {1.0, -1.0}) {
            double slope = tr.new_slope - sgn * tr.slopes(i);
            if (slope == 0.0) continue;
            double t = a - (dA - sgn * ri) / slope;
            if (t > a && t < b) roots.push_back(t);
        }
    }
    std::sort(roots.begin(), roots.end());
    std::vector<double> cuts{a};
    for (double r : roots)
        if (r - cuts.back() > 1e-12) cuts.push_back(r);
    if (b - cuts.back() <= 1e-12 && cuts.size() > 1) cuts.back() = b;
    else cuts.push_back(b);
    const std::size_t first = out.size();
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        double lo = cuts[k];
        double hi = cuts[k + 1];
        if (tr.count_at(0.5 * (lo + hi)) > K) continue;
        auto hi_src = k + 2 == cuts.size() ? BoundarySource::Breakpoint : BoundarySource::RankCrossing;
        if (out.size() > first && out.back().hi == lo) {
            out.back().hi = hi;
            out.back().hi_source = hi_src;
        } else {
            out.push_back({lo, hi, k == 0 ? BoundarySource::Breakpoint : BoundarySource::RankCrossing, hi_src});
        }
    }
}

// Under the cross-leverage condition every |r_i| is overtaken at most once
// moving away from t = 0, so the count is monotone on the segment and only
// the first exit crossing matters.
inline void fast_pieces(const ResidualTrajectory& tr, double a, double b, int outward, Index K,
                        std::vector<Piece>& out) {
    const double e0 = outward > 0 ? a : b;
    const double own0 = std::abs(tr.new_intercept + tr.new_slope * (e0 - tr.t_anchor));
    const double d0 = tr.new_intercept + tr.new_slope * (e0 - tr.t_anchor);
    Index count = 1;
    std::vector<double> crossings;
    for (Index i = 0; i < tr.intercepts.size(); ++i) {
        double ri = tr.intercepts(i) + tr.slopes(i) * (e0 - tr.t_anchor);
        if (std::abs(ri) <= own0) {
            ++count;
            continue;
        }
        double best = std::numeric_limits<double>::infinity();
        for (double sgn : {1.0, -1.0}) {
            double slope = tr.new_slope - sgn * tr.slopes(i);
            if (slope == 0.0) continue;
            double t = e0 - (d0 - sgn * ri) / slope;
            double dist = outward * (t - e0);
            if (dist > 0.0 && t > a && t < b) best = std::min(best, t);
        }
        if (std::isfinite(best)) crossings.push_back(best);
    }
    if (count > K) return;
    std::size_t allowed = static_cast<std::size_t>(K - count);
    if (crossings.size() <= allowed) {
        out.push_back({a, b, BoundarySource::Breakpoint, BoundarySource::Breakpoint});
        return;
    }
    if (outward > 0) {
        std::nth_element(crossings.begin(), crossings.begin() + static_cast<std::ptrdiff_t>(allowed), crossings.end());
        double exit = crossings[allowed];
        if (exit - a > 1e-12) out.push_back({a, exit, BoundarySource::Breakpoint, BoundarySource::RankCrossing});
    } else {
        std::nth_element(crossings.begin(), crossings.begin() + static_cast<std::ptrdiff_t>(allowed), crossings.end(),
                         std::greater<double>());
        double exit = crossings[allowed];
        if (b - exit > 1e-12) out.push_back({exit, b, BoundarySource::RankCrossing, BoundarySource::Breakpoint});
    }
}

inline bool segment_condition(const ResidualTrajectory& tr) {
    return tr.slopes.size() == 0 || tr.slopes.cwiseAbs().maxCoeff() < tr.new_slope;
}

inline std::vector<Piece> merge_pieces(std::vector<Piece> pieces) {
    std::sort(pieces.begin(), pieces.end(), [](const Piece& a, const Piece& b) { return a.lo < b.lo; });
    std::vector<Piece> out;
    for (const Piece& p : pieces) {
        if (!(p.hi > p.lo)) continue;
        if (!out.empty() && p.lo <= out.back().hi + 1e-12) {
            if (p.hi > out.back().hi) {
                out.back().hi = p.hi;
                out.back().hi_source = p.hi_source;
            }
        } else {
            out.push_back(p);
        }
    }
    return out;
}

}  // namespace detail

/// Exact conformal prediction set of the (elastic-net) Lasso at x_new,
/// restricted to [range.lo, range.hi), from the perturb-one homotopy. Reuses
/// a base fit computed on `data`.
inline PredictionSet exact_set(const Dataset& data, const LassoFit& base, const Vector& x_new, double alpha,
                               Range range, const ConformalOptions& opt = {}) {
    validate_alpha(alpha);
    if (!(range.lo < range.hi)) throw input_error("search range must satisfy lo < hi");
    auto started = std::chrono::steady_clock::now();

    const QueryPoint query = make_query(base, x_new);
    const Index K = rank_threshold(data.n(), alpha);
    const double t_lo = range.lo - query.y_hat0;
    const double t_hi = range.hi - query.y_hat0;

    PredictionSet result;
    result.alpha = alpha;
    std::vector<detail::Piece> pieces;

    auto visit = [&](int outward) {
        // Early stop: the anchor component ends at the first excluded stretch.
        return [&, outward](const HomotopySegment& seg) {
            if (seg.t_end <= seg.t_start) return true;
            ResidualTrajectory tr = residual_trajectory(data, query, seg);
            bool cond = detail::segment_condition(tr);
            result.interval_condition_held = result.interval_condition_held && cond;
            std::size_t before = pieces.size();
            if (opt.fast && cond) detail::fast_pieces(tr, seg.t_start, seg.t_end, outward, K, pieces);
            else detail::general_pieces(tr, seg.t_start, seg.t_end, K, pieces);
            if (!opt.early_stop_anchor) return true;
            // Continue only while the segment is fully covered.
            if (pieces.size() != before + 1) return false;
            const detail::Piece& p = pieces.back();
            return p.lo <= seg.t_start + 1e-12 && p.hi >= seg.t_end - 1e-12;
        };
    };

    HomotopyPath path = trace(data, base, query, std::min(0.0, t_lo), std::max(0.0, t_hi), opt.homotopy,
                              visit(+1), visit(-1));
    result.n_segments = path.diagnostics.segments;
    result.n_fallbacks = path.diagnostics.fallback_refits;

    std::vector<detail::Piece> merged = detail::merge_pieces(std::move(pieces));
    if (opt.early_stop_anchor) {
        std::vector<detail::Piece> keep;
        for (const auto& p : merged)
            if (p.lo <= 0.0 && 0.0 < p.hi) keep.push_back(p);
        merged = std::move(keep);
    }
    for (auto& p : merged) {
        if (p.lo <= t_lo) {
            p.lo = t_lo;
            p.lo_source = BoundarySource::RangeClip;
        }
        if (p.hi >= t_hi) {
            p.hi = t_hi;
            p.hi_source = BoundarySource::RangeClip;
        }
        if (!(p.hi > p.lo)) continue;
        double lo = p.lo_source == BoundarySource::RangeClip ? range.lo : p.lo + query.y_hat0;
        double hi = p.hi_source == BoundarySource::RangeClip ? range.hi : p.hi + query.y_hat0;
        result.intervals.push_back({lo, hi, p.lo_source, p.hi_source});
    }
    result.is_single_interval = result.intervals.size() == 1;
    result.runtime_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return result;
}

inline PredictionSet exact_set(const Dataset& data, const Vector& x_new, const PenaltyConfig& penalty, double alpha,
                               Range range, const ConformalOptions& opt = {}) {
    LassoFit base = fit(data, penalty, opt.homotopy.solver);
    return exact_set(data, base, x_new, alpha, range, opt);
}

inline PredictionSet exact_set_fast(const Dataset& data, const LassoFit& base, const Vector& x_new, double alpha,
                                    Range range, ConformalOptions opt = {}) {
    opt.fast = true;
    return exact_set(data, base, x_new, alpha, range, opt);
}

inline PredictionSet exact_set_fast(const Dataset& data, const Vector& x_new, const PenaltyConfig& penalty,
                                    double alpha, Range range, ConformalOptions opt = {}) {
    opt.fast = true;
    return exact_set(data, x_new, penalty, alpha, range, opt);
}

struct GridResult {
    double step = 0.0;
    std::vector<double> y;
    std::vector<bool> in_set;
    std::vector<double> p_values;
};

inline std::vector<double> grid_points(Range range, double step) {
    if (!(step > 0.0)) throw input_error("grid step must be positive");
    if (!(range.lo < range.hi)) throw input_error("search range must satisfy lo < hi");
    std::vector<double> ys;
    auto count = static_cast<std::size_t>(std::floor((range.hi - range.lo) / step + 1e-9));
    ys.reserve(count + 1);
    for (std::size_t k = 0; k <= count; ++k) ys.push_back(range.lo + static_cast<double>(k) * step);
    return ys;
}

/// Brute-force baseline: one cold augmented fit per grid point.
inline GridResult grid_set(const Dataset& data, const Vector& x_new, const PenaltyConfig& penalty, double alpha,
                           Range range, double step, const SolverOptions& solver = {}) {
    validate_alpha(alpha);
    GridResult g;
    g.step = step;
    g.y = grid_points(range, step);
    const Index K = rank_threshold(data.n(), alpha);
    for (double y : g.y) {
        PValue pv = p_value(data, x_new, y, penalty, solver);
        g.p_values.push_back(pv.p);
        g.in_set.push_back(pv.count <= K);
    }
    return g;
}

/// Grid indicators as a set: each included point owns the cell of width
/// `step` centred on it, clipped to the range.
inline PredictionSet grid_to_set(const GridResult& g, double alpha, Range range) {
    PredictionSet s;
    s.alpha = alpha;
    for (std::size_t k = 0; k < g.y.size(); ++k) {
        if (!g.in_set[k]) continue;
        double lo = std::max(range.lo, g.y[k] - 0.5 * g.step);
        double hi = std::min(range.hi, g.y[k] + 0.5 * g.step);
        if (!s.intervals.empty() && lo <= s.intervals.back().hi + 1e-12) s.intervals.back().hi = hi;
        else s.intervals.push_back({lo, hi, BoundarySource::GridCell, BoundarySource::GridCell});
    }
    s.is_single_interval = s.intervals.size() == 1;
    return s;
}

class degenerate_split : public input_error {
public:
    using input_error::input_error;
};

/// Split conformal calibration: fit on one part, sorted absolute residuals
/// on the holdout.
class SplitConformal {
public:
    SplitConformal(const Dataset& data, const PenaltyConfig& penalty, double split_fraction, std::uint64_t seed,
                   const SolverOptions& solver = {}) {
        if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw input_error("split fraction must lie in (0, 1)");
        std::vector<Index> idx(static_cast<std::size_t>(data.n()));
        std::iota(idx.begin(), idx.end(), Index{0});
        std::mt19937_64 rng(seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        auto n_fit = static_cast<std::size_t>(std::floor(split_fraction * static_cast<double>(data.n())));
        if (n_fit == 0 || n_fit >= idx.size()) throw degenerate_split("split leaves an empty half");
        std::vector<Index> fit_rows(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_fit));
        std::vector<Index> hold_rows(idx.begin() + static_cast<std::ptrdiff_t>(n_fit), idx.end());
        Dataset fit_part = data.subset(fit_rows);
        Dataset hold = data.subset(hold_rows);
        beta_ = fit(fit_part, penalty, solver).beta;
        Vector r = (hold.y() - hold.X() * beta_).cwiseAbs();
        residuals_.assign(r.data(), r.data() + r.size());
        std::sort(residuals_.begin(), residuals_.end());
    }

    Index holdout_size() const { return static_cast<Index>(residuals_.size()); }
    const Vector& beta() const { return beta_; }

    PredictionSet predict(const Vector& x_new, double alpha, Range range) const {
        validate_alpha(alpha);
        auto started = std::chrono::steady_clock::now();
        PredictionSet s;
        s.alpha = alpha;
        double center = x_new.dot(beta_);
        Index m = holdout_size();
        Index k = rank_threshold(m, alpha);
        if (k > m) {
            s.clipped_infinite = true;
            s.intervals.push_back({range.lo, range.hi, BoundarySource::RangeClip, BoundarySource::RangeClip});
        } else {
            double w = residuals_[static_cast<std::size_t>(k - 1)];
            s.intervals.push_back({center - w, center + w, BoundarySource::SplitQuantile, BoundarySource::SplitQuantile});
        }
        s.is_single_interval = true;
        s.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
        return s;
    }

private:
    Vector beta_;
    std::vector<double> residuals_;
};

inline PredictionSet split_set(const Dataset& data, const Vector& x_new, const PenaltyConfig& penalty, double alpha,
                               double split_fraction, std::uint64_t seed, Range range) {
    return SplitConformal(data, penalty, split_fraction, seed).predict(x_new, alpha, range);
}

}  // namespace conflasso
