#pragma once

#include "conflasso/cholesky.hpp"
#include "conflasso/lasso.hpp"
#include "conflasso/types.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace conflasso {

/// Covariate of the appended point and the base prediction at it. The
/// appended response is y_hat0 + t.
struct QueryPoint {
    Vector x_new;
    double y_hat0 = 0.0;
};

inline QueryPoint make_query(const LassoFit& base, const Vector& x_new) {
    if (x_new.size() != base.beta.size()) throw dimension_mismatch("query covariate has wrong length");
    if (!x_new.allFinite()) throw input_error("query covariate contains non-finite values");
    return QueryPoint{x_new, x_new.dot(base.beta)};
}

enum class ChangeKind { Start, Deletion, Addition, Refit, Clipped, Unbounded };

inline const char* to_string(ChangeKind k) {
    switch (k) {
        case ChangeKind::Start: return "start";
        case ChangeKind::Deletion: return "deletion";
        case ChangeKind::Addition: return "addition";
        case ChangeKind::Refit: return "refit";
        case ChangeKind::Clipped: return "clipped";
        case ChangeKind::Unbounded: return "unbounded";
    }
    return "?";
}

/// One linear piece of t -> beta(t). All slopes are d/dt in the t-axis
/// orientation regardless of the direction the piece was traced in.
struct HomotopySegment {
    double t_start = 0.0;
    double t_end = 0.0;
    std::vector<Index> active;    // ascending
    Vector eta;                   // aligned with `active`
    std::vector<Index> inactive;  // ascending
    Vector gamma;                 // aligned with `inactive`
    Vector beta_anchor;           // beta(t_start), length p
    Vector v_inactive_anchor;     // v_{inactive}(t_start)
    double new_residual_slope = 1.0;  // d r_{n+1} / dt = 1 / (1 + x_J' M^{-1} x_J)
    ChangeKind change = ChangeKind::Start;   // event that opened the piece
    Index change_coordinate = -1;
    ChangeKind end_change = ChangeKind::Clipped;  // event that closed it
    Index end_coordinate = -1;
    bool ridge_fallback = false;

    Vector beta_at(double t) const {
        Vector b = beta_anchor;
        double dt = t - t_start;
        for (std::size_t k = 0; k < active.size(); ++k) b(active[k]) += eta(static_cast<Index>(k)) * dt;
        return b;
    }

    Vector dual_inactive_at(double t) const { return v_inactive_anchor + gamma * (t - t_start); }
};

struct HomotopyDiagnostics {
    Index segments = 0;
    Index fallback_refits = 0;
    Index tie_events = 0;
    Index ridge_segments = 0;
    Index dual_resyncs = 0;
    bool base_on_boundary = false;
};

struct HomotopyPath {
    LassoFit base;
    QueryPoint query;
    std::vector<HomotopySegment> positive_segments;  // increasing t from 0
    std::vector<HomotopySegment> negative_segments;  // increasing t, ending at 0
    HomotopyDiagnostics diagnostics;

    /// All segments in increasing t.
    std::vector<const HomotopySegment*> ordered() const {
        std::vector<const HomotopySegment*> out;
        for (const auto& s : negative_segments) out.push_back(&s);
        for (const auto& s : positive_segments) out.push_back(&s);
        return out;
    }

    const HomotopySegment& segment_at(double t) const {
        const auto& side = (t < 0.0 && !negative_segments.empty()) || positive_segments.empty()
                               ? negative_segments
                               : positive_segments;
        auto it = std::lower_bound(side.begin(), side.end(), t,
                                   [](const HomotopySegment& s, double v) { return s.t_end < v; });
        if (it == side.end()) --it;
        return *it;
    }

    Vector beta_at(double t) const { return segment_at(t).beta_at(t); }
};

struct SegmentDirections {
    Vector eta;    // on J, in J order
    Vector gamma;  // on J^c, ascending
    std::vector<Index> inactive;
    double new_residual_slope = 1.0;
};

namespace detail {

inline std::vector<Index> complement(const std::vector<Index>& J, Index p) {
    std::vector<bool> in(static_cast<std::size_t>(p), false);
    for (Index j : J) in[static_cast<std::size_t>(j)] = true;
    std::vector<Index> out;
    for (Index j = 0; j < p; ++j)
        if (!in[static_cast<std::size_t>(j)]) out.push_back(j);
    return out;
}

inline Matrix gram_block(const Matrix& X, const std::vector<Index>& J, double rho) {
    Index m = static_cast<Index>(J.size());
    Matrix XJ(X.rows(), m);
    for (Index k = 0; k < m; ++k) XJ.col(k) = X.col(J[static_cast<std::size_t>(k)]);
    Matrix G = XJ.transpose() * XJ;
    G.diagonal().array() += rho;
    return G;
}

// gamma = x_Jc * slope - X_Jc' X_J eta, the inactive dual slopes.
inline SegmentDirections directions_from_eta(const Matrix& X, const Vector& x_new, const std::vector<Index>& J,
                                             Vector eta, double slope) {
    SegmentDirections d;
    d.eta = std::move(eta);
    d.new_residual_slope = slope;
    Vector u = Vector::Zero(X.rows());
    for (std::size_t k = 0; k < J.size(); ++k) u.noalias() += d.eta(static_cast<Index>(k)) * X.col(J[k]);
    d.inactive = complement(J, X.cols());
    d.gamma.resize(static_cast<Index>(d.inactive.size()));
    for (std::size_t k = 0; k < d.inactive.size(); ++k) {
        Index j = d.inactive[k];
        d.gamma(static_cast<Index>(k)) = x_new(j) * slope - X.col(j).dot(u);
    }
    return d;
}

// Given w = M^{-1} x_J with M the original-data Gram on J plus ridge, build
// eta by Sherman-Morrison.
inline SegmentDirections finish_directions(const Matrix& X, const Vector& x_new, const std::vector<Index>& J,
                                           const Vector& w) {
    Vector xJ(static_cast<Index>(J.size()));
    for (std::size_t k = 0; k < J.size(); ++k) xJ(static_cast<Index>(k)) = x_new(J[k]);
    double q = xJ.dot(w);
    return directions_from_eta(X, x_new, J, w / (1.0 + q), 1.0 / (1.0 + q));
}

// Same directions from the augmented Gram M + x_J x_J'. This stays valid
// when M itself is singular (more active columns than original rows).
inline std::optional<SegmentDirections> augmented_directions(const Matrix& X, const Vector& x_new,
                                                             const std::vector<Index>& J, double rho,
                                                             double max_condition) {
    Vector xJ(static_cast<Index>(J.size()));
    for (std::size_t k = 0; k < J.size(); ++k) xJ(static_cast<Index>(k)) = x_new(J[k]);
    Matrix M = gram_block(X, J, rho);
    M.noalias() += xJ * xJ.transpose();
    Eigen::LLT<Matrix> llt(M);
    if (llt.info() != Eigen::Success) return std::nullopt;
    Vector dg = llt.matrixLLT().diagonal().cwiseAbs();
    double ratio = dg.maxCoeff() / dg.minCoeff();
    if (!(ratio * ratio <= max_condition)) return std::nullopt;
    Vector eta = llt.solve(xJ);
    double slope = 1.0 - xJ.dot(eta);
    return directions_from_eta(X, x_new, J, std::move(eta), slope);
}

}  // namespace detail

/// Primal and dual slopes of the perturb-one path on a fixed active set J.
/// Throws singular_gram when the original-data Gram on J (plus rho I) is
/// not positive definite.
inline SegmentDirections segment_directions(const Dataset& data, const QueryPoint& query,
                                            const std::vector<Index>& J, const PenaltyConfig& penalty) {
    if (query.x_new.size() != data.p()) throw dimension_mismatch("query covariate has wrong length");
    Index m = static_cast<Index>(J.size());
    Vector w(m);
    if (m > 0) {
        Matrix M = detail::gram_block(data.X(), J, penalty.rho);
        Eigen::LLT<Matrix> llt(M);
        if (llt.info() != Eigen::Success) throw singular_gram("Gram submatrix on the active set is singular");
        Vector d = llt.matrixLLT().diagonal().cwiseAbs();
        if ((d.maxCoeff() / d.minCoeff()) * (d.maxCoeff() / d.minCoeff()) > 1e12)
            throw singular_gram("Gram submatrix on the active set is numerically singular");
        Vector xJ(m);
        for (Index k = 0; k < m; ++k) xJ(k) = query.x_new(J[static_cast<std::size_t>(k)]);
        w = llt.solve(xJ);
    }
    return detail::finish_directions(data.X(), query.x_new, J, w);
}

struct Breakpoint {
    double t_next = std::numeric_limits<double>::infinity();
    ChangeKind change = ChangeKind::Unbounded;
    Index coordinate = -1;
    bool tie_detected = false;
};

/// Next point of change from t_k, moving in direction `dir` (+1 or -1).
/// Deletion candidates come from the active coordinates reaching zero,
/// addition candidates from inactive duals reaching +-lambda. Non-positive
/// step lengths are discarded; two candidates closer than
/// tie_tol * max(1, |t|) are reported as a tie.
inline Breakpoint next_breakpoint(double t_k, const std::vector<Index>& active, const Vector& beta_active,
                                  const Vector& eta, const std::vector<Index>& inactive,
                                  const Vector& v_inactive, const Vector& gamma, double lambda, int dir = 1,
                                  double tie_tol = 1e-9) {
    const double inf = std::numeric_limits<double>::infinity();
    double best = inf;
    double second = inf;
    Breakpoint bp;
    auto offer = [&](double step, ChangeKind kind, Index j) {
        if (!(step > 0.0) || !std::isfinite(step)) return;
        if (step < best) {
            second = best;
            best = step;
            bp.change = kind;
            bp.coordinate = j;
        } else if (step < second) {
            second = step;
        }
    };
    for (std::size_t k = 0; k < active.size(); ++k) {
        double slope = dir * eta(static_cast<Index>(k));
        if (slope == 0.0) continue;
        offer(-beta_active(static_cast<Index>(k)) / slope, ChangeKind::Deletion, active[k]);
    }
    for (std::size_t k = 0; k < inactive.size(); ++k) {
        double slope = dir * gamma(static_cast<Index>(k));
        if (slope == 0.0) continue;
        offer((sign_of(slope) * lambda - v_inactive(static_cast<Index>(k))) / slope, ChangeKind::Addition,
              inactive[k]);
    }
    if (best == inf) return bp;
    bp.t_next = t_k + dir * best;
    bp.tie_detected = std::isfinite(second) && (second - best) <= tie_tol * std::max(1.0, std::abs(bp.t_next));
    return bp;
}

struct HomotopyOptions {
    double tie_tol = 1e-9;
    double refit_offset = 1e-7;
    Index refactor_every = 50;
    double max_condition = 1e12;
    Index dual_resync_every = 20;
    // Segments allowed per direction, as a multiple of n + p.
    Index segment_cap_factor = 10;
    SolverOptions solver;
};

namespace detail {

// Walks the path in one direction from t = 0, owning the mutable state.
class DirectionalTracer {
public:
    DirectionalTracer(const Dataset& data, const LassoFit& base, const QueryPoint& query, int dir,
                      const HomotopyOptions& opt, HomotopyDiagnostics& diag)
        : data_(data), base_(base), query_(query), dir_(dir), opt_(opt), diag_(diag),
          lambda_(base.penalty.lambda), rho_(base.penalty.rho), beta_(base.beta), v_(base.dual) {}

    // Calls on_segment for each finished piece until |t| reaches `limit` or
    // on_segment returns false.
    void run(double limit, const std::function<bool(HomotopySegment&&)>& on_segment) {
        const Index cap = opt_.segment_cap_factor * (data_.n() + data_.p());
        double tau = 0.0;
        ChangeKind opened_by = ChangeKind::Start;
        Index opened_coord = -1;

        if (!base_.boundary_ties.empty()) {
            diag_.base_on_boundary = true;
            refit_support(0.0);
            opened_by = ChangeKind::Refit;
        } else {
            set_active(base_.active);
        }

        Index count = 0;
        while (true) {
            if (++count > cap)
                throw numerical_error("homotopy exceeded segment cap of " + std::to_string(cap) +
                                      " in one direction");
            Directions d = directions();

            if (!consistent(opened_by, opened_coord, d)) {
                refit_support(tau);
                opened_by = ChangeKind::Refit;
                opened_coord = -1;
                d = directions();
            }

            std::vector<Index> inactive = d.dirs.inactive;
            Vector beta_J = gather(beta_, order_);
            Vector v_Jc = gather(v_, inactive);
            Breakpoint bp = next_breakpoint(dir_ * tau, order_, beta_J, d.dirs.eta, inactive, v_Jc, d.dirs.gamma,
                                            lambda_, dir_, opt_.tie_tol);
            double step = std::isfinite(bp.t_next) ? dir_ * (bp.t_next - dir_ * tau)
                                                   : std::numeric_limits<double>::infinity();
            bool tie = bp.tie_detected;
            ChangeKind end_kind = bp.change;
            if (!(tau + step < limit)) {
                step = limit - tau;
                end_kind = ChangeKind::Clipped;
                tie = false;
            }

            HomotopySegment seg;
            seg.active = order_;
            seg.eta = d.dirs.eta;
            seg.inactive = inactive;
            seg.gamma = d.dirs.gamma;
            seg.new_residual_slope = d.dirs.new_residual_slope;
            seg.ridge_fallback = d.ridge;
            seg.change = opened_by;
            seg.change_coordinate = opened_coord;
            seg.end_change = end_kind;
            seg.end_coordinate = end_kind == ChangeKind::Clipped ? -1 : bp.coordinate;

            const double t_from = dir_ * tau;
            const double t_to = dir_ * (tau + step);
            Vector beta_from = beta_;
            Vector v_from = v_Jc;
            advance(d, inactive, step);
            tau += step;
            if (dir_ > 0) {
                seg.t_start = t_from;
                seg.t_end = t_to;
                seg.beta_anchor = std::move(beta_from);
                seg.v_inactive_anchor = std::move(v_from);
            } else {
                seg.t_start = t_to;
                seg.t_end = t_from;
                seg.beta_anchor = beta_;
                seg.v_inactive_anchor = gather(v_, inactive);
            }
            sort_segment(seg);
            ++diag_.segments;
            if (!on_segment(std::move(seg)) || end_kind == ChangeKind::Clipped) return;

            if (tie) {
                ++diag_.tie_events;
                refit_support(tau);
                opened_by = ChangeKind::Refit;
                opened_coord = -1;
                continue;
            }
            apply_change(bp.change, bp.coordinate, d);
            opened_by = bp.change;
            opened_coord = bp.coordinate;
            if (opt_.dual_resync_every > 0 && count % opt_.dual_resync_every == 0) resync_dual(tau);
        }
    }

private:
    struct Directions {
        SegmentDirections dirs;
        bool ridge = false;
    };

    static Vector gather(const Vector& full, const std::vector<Index>& idx) {
        Vector out(static_cast<Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Index>(k)) = full(idx[k]);
        return out;
    }

    Vector x_active() const { return gather(query_.x_new, order_); }

    void set_active(const std::vector<Index>& J) {
        order_ = J;
        chol_ok_ = chol_.refactor(gram_block(data_.X(), order_, rho_));
    }

    Directions directions() {
        Directions out;
        if (order_.empty()) {
            out.dirs = finish_directions(data_.X(), query_.x_new, order_, Vector(0));
            return out;
        }
        if (chol_ok_ && (chol_.updates_since_refactor() >= opt_.refactor_every ||
                         chol_.condition_estimate() > opt_.max_condition))
            chol_ok_ = chol_.refactor(gram_block(data_.X(), order_, rho_));
        Vector xJ = x_active();
        if (chol_ok_) {
            out.dirs = finish_directions(data_.X(), query_.x_new, order_, chol_.solve(xJ));
            return out;
        }
        if (auto aug = augmented_directions(data_.X(), query_.x_new, order_, rho_, opt_.max_condition)) {
            out.dirs = std::move(*aug);
            return out;
        }
        // Augmented Gram is singular too: add a small ridge for this segment
        // only.
        Matrix M = gram_block(data_.X(), order_, rho_);
        double ridge = 1e-8 * std::max(M.trace(), 1e-300) / static_cast<double>(order_.size());
        M.diagonal().array() += ridge;
        Eigen::LDLT<Matrix> ldlt(M);
        out.dirs = finish_directions(data_.X(), query_.x_new, order_, ldlt.solve(xJ));
        out.ridge = true;
        ++diag_.ridge_segments;
        return out;
    }

    // Sign checks at a simple change point: a deleted coordinate's dual must
    // move back inside [-lambda, lambda]; an added coordinate must grow with
    // the sign of its dual.
    bool consistent(ChangeKind kind, Index j, const Directions& d) const {
        if (kind == ChangeKind::Deletion) {
            auto it = std::find(d.dirs.inactive.begin(), d.dirs.inactive.end(), j);
            if (it == d.dirs.inactive.end()) return false;
            double g = dir_ * d.dirs.gamma(static_cast<Index>(it - d.dirs.inactive.begin()));
            return g * sign_of(v_(j)) < 0.0;
        }
        if (kind == ChangeKind::Addition) {
            auto it = std::find(order_.begin(), order_.end(), j);
            if (it == order_.end()) return false;
            double e = dir_ * d.dirs.eta(static_cast<Index>(it - order_.begin()));
            return e * sign_of(v_(j)) > 0.0;
        }
        return true;
    }

    void advance(const Directions& d, const std::vector<Index>& inactive, double step) {
        double dt = dir_ * step;
        for (std::size_t k = 0; k < order_.size(); ++k) beta_(order_[k]) += d.dirs.eta(static_cast<Index>(k)) * dt;
        for (std::size_t k = 0; k < inactive.size(); ++k) v_(inactive[k]) += d.dirs.gamma(static_cast<Index>(k)) * dt;
    }

    void apply_change(ChangeKind kind, Index j, const Directions& d) {
        if (kind == ChangeKind::Deletion) {
            auto it = std::find(order_.begin(), order_.end(), j);
            Index pos = static_cast<Index>(it - order_.begin());
            // beta_j is ~0 here; its sign on the closed piece is opposite to its slope.
            v_(j) = -sign_of(dir_ * d.dirs.eta(pos)) * lambda_;
            beta_(j) = 0.0;
            order_.erase(it);
            if (chol_ok_) chol_.remove(pos);
            else chol_ok_ = chol_.refactor(gram_block(data_.X(), order_, rho_));
        } else if (kind == ChangeKind::Addition) {
            v_(j) = sign_of(v_(j)) * lambda_;
            beta_(j) = 0.0;
            Vector cross(static_cast<Index>(order_.size()));
            for (std::size_t k = 0; k < order_.size(); ++k)
                cross(static_cast<Index>(k)) = data_.X().col(order_[k]).dot(data_.X().col(j));
            double diag = data_.X().col(j).squaredNorm() + rho_;
            order_.push_back(j);
            if (chol_ok_) chol_ok_ = chol_.append(cross, diag);
            if (!chol_ok_) chol_ok_ = chol_.refactor(gram_block(data_.X(), order_, rho_));
        }
    }

    // Dual of the augmented problem at t = dir * tau, recomputed from beta.
    Vector dual_at(double tau) const {
        double t = dir_ * tau;
        Vector r = data_.y() - data_.X() * beta_;
        double r_new = query_.y_hat0 + t - query_.x_new.dot(beta_);
        return data_.X().transpose() * r + query_.x_new * r_new - rho_ * beta_;
    }

    void resync_dual(double tau) {
        Vector v = dual_at(tau);
        std::vector<bool> active(static_cast<std::size_t>(v.size()), false);
        for (Index j : order_) active[static_cast<std::size_t>(j)] = true;
        for (Index j = 0; j < v.size(); ++j) {
            if (active[static_cast<std::size_t>(j)]) continue;
            double vj = std::clamp(v(j), -lambda_, lambda_);
            if (std::abs(v_(j)) == lambda_ && std::abs(vj) >= lambda_ * (1.0 - 1e-12)) vj = v_(j);
            v_(j) = vj;
        }
        ++diag_.dual_resyncs;
    }

    // Cold augmented refit just past the trouble point decides the support;
    // beta and the duals keep their values at tau (the path is continuous).
    void refit_support(double tau) {
        ++diag_.fallback_refits;
        double t_probe = dir_ * (tau + opt_.refit_offset);
        Dataset aug = data_.augmented(query_.x_new, query_.y_hat0 + t_probe);
        LassoFit probe = fit(aug, base_.penalty, opt_.solver);
        for (Index j = 0; j < beta_.size(); ++j)
            if (probe.beta(j) == 0.0) beta_(j) = 0.0;
        set_active(probe.active);
        Vector v = dual_at(tau);
        for (Index j = 0; j < v.size(); ++j) {
            if (probe.beta(j) != 0.0) {
                v_(j) = sign_of(probe.beta(j)) * lambda_;
                continue;
            }
            double vj = std::clamp(v(j), -lambda_, lambda_);
            if (std::abs(vj) >= lambda_ * (1.0 - 1e-9)) vj = sign_of(vj) * lambda_;
            v_(j) = vj;
        }
    }

    static void sort_segment(HomotopySegment& seg) {
        std::vector<std::size_t> perm(seg.active.size());
        for (std::size_t k = 0; k < perm.size(); ++k) perm[k] = k;
        std::sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return seg.active[a] < seg.active[b]; });
        std::vector<Index> J(perm.size());
        Vector eta(static_cast<Index>(perm.size()));
        for (std::size_t k = 0; k < perm.size(); ++k) {
            J[k] = seg.active[perm[k]];
            eta(static_cast<Index>(k)) = seg.eta(static_cast<Index>(perm[k]));
        }
        seg.active = std::move(J);
        seg.eta = std::move(eta);
    }

    const Dataset& data_;
    const LassoFit& base_;
    const QueryPoint& query_;
    const int dir_;
    const HomotopyOptions& opt_;
    HomotopyDiagnostics& diag_;
    const double lambda_;
    const double rho_;

    Vector beta_;
    Vector v_;
    std::vector<Index> order_;  // active set in factor order
    UpdatableCholesky chol_;
    bool chol_ok_ = true;
};

inline void require_base(const Dataset& data, const LassoFit& base) {
    if (base.beta.size() != data.p()) throw dimension_mismatch("base fit does not match data");
}

}  // namespace detail

/// Callback per finished segment; return false to stop tracing that direction.
using SegmentVisitor = std::function<bool(const HomotopySegment&)>;

/// Trace beta(t) over [t_lo, t_hi] for the appended point (x_new, y_hat0 + t).
/// Visitors (optional) see each segment as it is produced and may stop a
/// direction early; the returned path then covers only what was traced.
inline HomotopyPath trace(const Dataset& data, const LassoFit& base, const QueryPoint& query, double t_lo,
                          double t_hi, const HomotopyOptions& opt = {}, const SegmentVisitor& on_positive = {},
                          const SegmentVisitor& on_negative = {}) {
    detail::require_base(data, base);
    if (query.x_new.size() != data.p()) throw dimension_mismatch("query covariate has wrong length");
    if (!(t_lo <= 0.0 && 0.0 <= t_hi)) throw input_error("trace range must contain 0");
    HomotopyPath path;
    path.base = base;
    path.query = query;

    if (t_lo == 0.0 && t_hi == 0.0) {
        HomotopySegment seg;
        seg.active = base.active;
        seg.eta = Vector::Zero(static_cast<Index>(base.active.size()));
        seg.inactive = detail::complement(base.active, data.p());
        seg.gamma = Vector::Zero(static_cast<Index>(seg.inactive.size()));
        seg.beta_anchor = base.beta;
        seg.v_inactive_anchor.resize(static_cast<Index>(seg.inactive.size()));
        for (std::size_t k = 0; k < seg.inactive.size(); ++k)
            seg.v_inactive_anchor(static_cast<Index>(k)) = base.dual(seg.inactive[k]);
        seg.end_change = ChangeKind::Clipped;
        path.positive_segments.push_back(std::move(seg));
        path.diagnostics.segments = 1;
        return path;
    }

    if (t_hi > 0.0) {
        detail::DirectionalTracer tracer(data, base, query, +1, opt, path.diagnostics);
        tracer.run(t_hi, [&](HomotopySegment&& seg) {
            bool go = on_positive ? on_positive(seg) : true;
            path.positive_segments.push_back(std::move(seg));
            return go;
        });
    }
    if (t_lo < 0.0) {
        detail::DirectionalTracer tracer(data, base, query, -1, opt, path.diagnostics);
        tracer.run(-t_lo, [&](HomotopySegment&& seg) {
            bool go = on_negative ? on_negative(seg) : true;
            path.negative_segments.push_back(std::move(seg));
            return go;
        });
        std::reverse(path.negative_segments.begin(), path.negative_segments.end());
    }
    return path;
}

/// Fit for the data with (x, y) appended, obtained by following the
/// homotopy from t = 0 to t* = y - x'beta.
inline LassoFit online_update(const Dataset& data, const LassoFit& base, const Vector& x, double y,
                              const HomotopyOptions& opt = {}, HomotopyDiagnostics* diag = nullptr) {
    detail::require_base(data, base);
    QueryPoint q = make_query(base, x);
    double t_star = y - q.y_hat0;
    Dataset aug = data.augmented(x, y);
    if (t_star == 0.0) return make_fit(aug, base.beta, base.penalty, opt.solver);
    HomotopyPath path = t_star > 0.0 ? trace(data, base, q, 0.0, t_star, opt) : trace(data, base, q, t_star, 0.0, opt);
    if (diag) *diag = path.diagnostics;
    const HomotopySegment& end = t_star > 0.0 ? path.positive_segments.back() : path.negative_segments.front();
    return make_fit(aug, end.beta_at(t_star), base.penalty, opt.solver);
}

/// Line-delimited JSON, one record per segment in increasing t.
inline void dump_path(std::ostream& os, const HomotopyPath& path) {
    for (const HomotopySegment* s : path.ordered()) {
        nlohmann::json j = {{"t_start", s->t_start},
                            {"t_end", s->t_end},
                            {"active", s->active},
                            {"active_size", s->active.size()},
                            {"change", to_string(s->change)},
                            {"change_coordinate", s->change_coordinate},
                            {"end_change", to_string(s->end_change)},
                            {"end_coordinate", s->end_coordinate},
                            {"ridge_fallback", s->ridge_fallback}};
        os << j.dump() << '\n';
    }
}

}  // namespace conflasso
