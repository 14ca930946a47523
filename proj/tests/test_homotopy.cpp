#include "test_support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace conflasso;
using namespace conflasso::testing;

namespace {

Dataset two_point() {
    Matrix X(2, 1);
    X << 1, 1;
    Vector y(2);
    y << 1, 3;
    return Dataset(X, y);
}

Vector one() { return Vector::Ones(1); }

}  // namespace

TEST(SegmentDirections, EmptyActiveSetGivesRawCovariate) {
    std::mt19937_64 rng(1);
    Dataset d(gaussian_matrix(rng, 6, 3), gaussian_vector(rng, 6));
    QueryPoint q{gaussian_vector(rng, 3), 0.0};
    SegmentDirections s = segment_directions(d, q, {}, {1.0, 0.0});
    EXPECT_EQ(s.eta.size(), 0);
    EXPECT_LE((s.gamma - q.x_new).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_DOUBLE_EQ(s.new_residual_slope, 1.0);
}

TEST(SegmentDirections, ShermanMorrisonMatchesRefitSlope) {
    Matrix X = Matrix::Ones(3, 1);
    Vector y(3);
    y << 2, 3, 4;
    Dataset d(X, y);
    PenaltyConfig pen{0.5, 0.0};
    LassoFit base = fit(d, pen);
    QueryPoint q = make_query(base, one());
    SegmentDirections s = segment_directions(d, q, {0}, pen);
    EXPECT_NEAR(s.eta(0), 0.25, 1e-15);
    // Oracle: finite difference of cold 4-point refits.
    double h = 1e-3;
    double b1 = fit(d.augmented(one(), q.y_hat0 + h), pen).beta(0);
    EXPECT_NEAR((b1 - base.beta(0)) / h, 0.25, 1e-10);
}

TEST(SegmentDirections, VanishingGammaInstance) {
    // Orthogonal columns, x_new supported on J only: no cross-covariance
    // reaches the inactive coordinate.
    Matrix X(4, 2);
    X << 1, 0, 1, 0, 0, 1, 0, -1;
    Dataset d(X, Vector::Ones(4));
    Vector xn(2);
    xn << 1.5, 0.0;
    SegmentDirections s = segment_directions(d, QueryPoint{xn, 0.0}, {0}, {0.1, 0.0});
    ASSERT_EQ(s.gamma.size(), 1);
    EXPECT_EQ(s.gamma(0), 0.0);
    // eta = G^{-1}x / (1 + x'G^{-1}x) with G = 2.
    EXPECT_NEAR(s.eta(0), 0.75 / (1.0 + 1.125), 1e-15);
}

TEST(SegmentDirections, SingularGramThrows) {
    Matrix X(3, 2);
    X << 1, 1, 2, 2, 3, 3;
    Dataset d(X, Vector::Ones(3));
    EXPECT_THROW(segment_directions(d, QueryPoint{Vector::Ones(2), 0.0}, {0, 1}, {1.0, 0.0}), singular_gram);
    EXPECT_NO_THROW(segment_directions(d, QueryPoint{Vector::Ones(2), 0.0}, {0, 1}, {1.0, 0.5}));
}

TEST(SegmentDirections, ElasticNetUsesRidgedGram) {
    std::mt19937_64 rng(9);
    Dataset d(gaussian_matrix(rng, 12, 4), gaussian_vector(rng, 12));
    Vector xn = gaussian_vector(rng, 4);
    std::vector<Index> J{0, 2};
    double rho = 0.8;
    SegmentDirections s = segment_directions(d, QueryPoint{xn, 0.0}, J, {1.0, rho});
    Matrix A(2, 2);
    Vector xJ(2);
    for (int a = 0; a < 2; ++a) {
        xJ(a) = xn(J[a]);
        for (int b = 0; b < 2; ++b) A(a, b) = d.X().col(J[a]).dot(d.X().col(J[b])) + xn(J[a]) * xn(J[b]);
    }
    A.diagonal().array() += rho;
    Vector direct = A.ldlt().solve(xJ);
    EXPECT_LE((s.eta - direct).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(NextBreakpoint, NothingBindsGivesInfinity) {
    Vector beta(1), eta(1), v(1), gamma(1);
    beta << 2.0;
    eta << 0.5;
    v << 0.3;
    gamma << 0.0;
    Breakpoint bp = next_breakpoint(0.0, {0}, beta, eta, {1}, v, gamma, 1.0);
    EXPECT_TRUE(std::isinf(bp.t_next));
    EXPECT_FALSE(bp.tie_detected);
}

TEST(NextBreakpoint, SingleDeletion) {
    Vector beta(1), eta(1);
    beta << 2.0;
    eta << -1.0;
    Breakpoint bp = next_breakpoint(1.0, {4}, beta, eta, {}, Vector(0), Vector(0), 1.0);
    EXPECT_DOUBLE_EQ(bp.t_next, 3.0);
    EXPECT_EQ(bp.change, ChangeKind::Deletion);
    EXPECT_EQ(bp.coordinate, 4);
}

TEST(NextBreakpoint, SingleAddition) {
    Vector v(1), gamma(1);
    v << 0.5;
    gamma << 0.25;
    Breakpoint bp = next_breakpoint(0.0, {}, Vector(0), Vector(0), {2}, v, gamma, 1.0);
    EXPECT_DOUBLE_EQ(bp.t_next, 2.0);
    EXPECT_EQ(bp.change, ChangeKind::Addition);
    EXPECT_EQ(bp.coordinate, 2);
}

TEST(NextBreakpoint, AdditionExampleConfirmedByRefit) {
    // x_new = e_2 reaches the inactive coordinate only through gamma.
    Matrix X(4, 2);
    X << 1, 0, 1, 0, 0, 1, 0, 1;
    Vector y(4);
    y << 2, 2, 0.25, 0.25;
    Dataset d(X, y);
    PenaltyConfig pen{1.0, 0.0};
    LassoFit base = fit(d, pen);
    ASSERT_EQ(base.active, std::vector<Index>{0});
    EXPECT_NEAR(base.dual(1), 0.5, 1e-15);
    Vector xn(2);
    xn << 0.0, 0.25;
    QueryPoint q = make_query(base, xn);
    SegmentDirections s = segment_directions(d, q, base.active, pen);
    ASSERT_NEAR(s.gamma(0), 0.25, 1e-15);
    Vector bJ(1);
    bJ << base.beta(0);
    Vector vJc(1);
    vJc << base.dual(1);
    Breakpoint bp = next_breakpoint(0.0, base.active, bJ, s.eta, s.inactive, vJc, s.gamma, pen.lambda);
    EXPECT_NEAR(bp.t_next, 2.0, 1e-14);
    EXPECT_EQ(bp.change, ChangeKind::Addition);
    EXPECT_EQ(fit(d.augmented(xn, q.y_hat0 + 1.99), pen).beta(1), 0.0);
    EXPECT_GT(fit(d.augmented(xn, q.y_hat0 + 2.01), pen).beta(1), 0.0);
}

TEST(NextBreakpoint, TieDetected) {
    Vector beta(1), eta(1), v(1), gamma(1);
    beta << 1.0;
    eta << -0.5;
    v << 0.0;
    gamma << 0.5;
    Breakpoint bp = next_breakpoint(0.0, {0}, beta, eta, {1}, v, gamma, 1.0);
    EXPECT_DOUBLE_EQ(bp.t_next, 2.0);
    EXPECT_TRUE(bp.tie_detected);
}

TEST(NextBreakpoint, NegativeDirection) {
    Vector beta(1), eta(1);
    beta << 2.0;
    eta << 1.0;
    Breakpoint bp = next_breakpoint(0.0, {0}, beta, eta, {}, Vector(0), Vector(0), 1.0, -1);
    EXPECT_DOUBLE_EQ(bp.t_next, -2.0);
    EXPECT_EQ(bp.change, ChangeKind::Deletion);
}

TEST(Trace, DegenerateRangeIsAnchor) {
    Dataset d = two_point();
    LassoFit base = fit(d, {1.0, 0.0});
    HomotopyPath path = trace(d, base, make_query(base, one()), 0.0, 0.0);
    ASSERT_EQ(path.positive_segments.size(), 1u);
    EXPECT_EQ(path.beta_at(0.0), base.beta);
}

TEST(Trace, OneDimensionalRunningExample) {
    Dataset d = two_point();
    PenaltyConfig pen{1.0, 0.0};
    LassoFit base = fit(d, pen);
    QueryPoint q = make_query(base, one());
    EXPECT_DOUBLE_EQ(q.y_hat0, 1.5);
    HomotopyPath path = trace(d, base, q, -3.0, 3.0);
    ASSERT_FALSE(path.positive_segments.empty());
    EXPECT_NEAR(path.positive_segments.front().eta(0), 1.0 / 3.0, 1e-15);
    for (double t : {0.5, 1.0, 2.0}) {
        double oracle = fit(d.augmented(one(), 1.5 + t), pen).beta(0);
        EXPECT_NEAR(path.beta_at(t)(0), oracle, 1e-12);
        EXPECT_NEAR(oracle, 1.5 + t / 3.0, 1e-12);
    }
    // Negative side crosses zero at t = -4.5 + 1 = -3.5: still active at -3.
    EXPECT_NEAR(path.beta_at(-3.0)(0), 0.5, 1e-12);
}

TEST(Trace, RejectsRangeWithoutZero) {
    Dataset d = two_point();
    LassoFit base = fit(d, {1.0, 0.0});
    EXPECT_THROW(trace(d, base, make_query(base, one()), 1.0, 2.0), input_error);
}

// The central property: the traced path agrees with cold augmented refits.
TEST(TraceProperty, RefitEquivalenceAndPathInvariants) {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    Index segments_seen = 0;
    for (int k = 0; k < 60; ++k) {
        Index n = uniform_index(rng, 10, 40);
        Index p = uniform_index(rng, 2, 15);
        double rho = (k % 2) ? 0.5 : 0.0;
        Instance inst = random_instance(rng, n, p, rho);
        LassoFit base = fit(inst.data, inst.penalty);
        QueryPoint q = make_query(base, inst.x_new);
        double span = 3.0 * (inst.data.y().maxCoeff() - inst.data.y().minCoeff());
        HomotopyPath path = trace(inst.data, base, q, -span, span);
        const double lam = inst.penalty.lambda;

        // Lemma: both directions start from the base fit.
        EXPECT_LE((path.positive_segments.front().beta_anchor - base.beta).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LE((path.negative_segments.back().beta_at(0.0) - base.beta).cwiseAbs().maxCoeff(), 1e-10);

        auto segs = path.ordered();
        segments_seen += static_cast<Index>(segs.size());
        EXPECT_NEAR(segs.front()->t_start, -span, 1e-9);
        EXPECT_NEAR(segs.back()->t_end, span, 1e-9);
        for (std::size_t s = 0; s < segs.size(); ++s) {
            const HomotopySegment& seg = *segs[s];
            EXPECT_LE(seg.t_start, seg.t_end);
            if (s + 1 < segs.size()) {
                EXPECT_NEAR(seg.t_end, segs[s + 1]->t_start, 1e-12);
                Vector left = seg.beta_at(seg.t_end);
                Vector right = segs[s + 1]->beta_at(segs[s + 1]->t_start);
                EXPECT_LE((left - right).cwiseAbs().maxCoeff(), 1e-8) << "discontinuity at " << seg.t_end;
            }
            for (double t : {seg.t_start, 0.5 * (seg.t_start + seg.t_end), seg.t_end}) {
                if (seg.gamma.size()) {
                    EXPECT_LE(seg.dual_inactive_at(t).cwiseAbs().maxCoeff(), lam + 1e-8);
                }
            }
            if (std::isfinite(seg.t_end - seg.t_start) && seg.t_end > seg.t_start) {
                // Active signs stay fixed inside a segment.
                Vector q1 = seg.beta_at(seg.t_start + 0.25 * (seg.t_end - seg.t_start));
                Vector q3 = seg.beta_at(seg.t_start + 0.75 * (seg.t_end - seg.t_start));
                for (Index j : seg.active) {
                    EXPECT_EQ(sign_of(q1(j)), sign_of(q3(j)));
                }
            }
        }
        for (int m = 0; m < 25; ++m) {
            double t = -span + 2 * span * U(rng);
            Vector oracle = fit(inst.data.augmented(inst.x_new, q.y_hat0 + t), inst.penalty).beta;
            EXPECT_LE((path.beta_at(t) - oracle).cwiseAbs().maxCoeff(), 1e-6) << "instance " << k << " t " << t;
            // Active duals equal sign * lambda, checked through the augmented data.
            Dataset aug = inst.data.augmented(inst.x_new, q.y_hat0 + t);
            Vector b = path.beta_at(t);
            Vector v = dual_of(aug, b, inst.penalty);
            for (Index j = 0; j < p; ++j) {
                if (b(j) != 0.0) {
                    EXPECT_NEAR(v(j), sign_of(b(j)) * lam, 1e-8 * std::max(1.0, lam));
                }
            }
        }
    }
    EXPECT_GT(segments_seen, 120);
}

// Sign consistency at simple change points.
TEST(TraceProperty, SignConsistencyAtChangePoints) {
    std::mt19937_64 rng(555);
    Index deletions = 0;
    Index additions = 0;
    for (int k = 0; k < 60; ++k) {
        Instance inst = random_instance(rng, uniform_index(rng, 15, 40), uniform_index(rng, 3, 12), (k % 2) ? 0.5 : 0.0);
        LassoFit base = fit(inst.data, inst.penalty);
        QueryPoint q = make_query(base, inst.x_new);
        HomotopyPath path = trace(inst.data, base, q, -50.0, 50.0);
        auto check_side = [&](const std::vector<HomotopySegment>& side, int dir) {
            // Walk in tracing order.
            std::vector<const HomotopySegment*> order;
            for (const auto& s : side) order.push_back(&s);
            if (dir < 0) std::reverse(order.begin(), order.end());
            for (std::size_t s = 1; s < order.size(); ++s) {
                const HomotopySegment& prev = *order[s - 1];
                const HomotopySegment& next = *order[s];
                Index j = next.change_coordinate;
                double t_change = dir > 0 ? next.t_start : next.t_end;
                if (next.change == ChangeKind::Deletion) {
                    auto pi = std::find(prev.active.begin(), prev.active.end(), j) - prev.active.begin();
                    auto ni = std::find(next.inactive.begin(), next.inactive.end(), j) - next.inactive.begin();
                    EXPECT_EQ(sign_of(next.gamma(ni)), sign_of(prev.eta(pi)));
                    ++deletions;
                } else if (next.change == ChangeKind::Addition) {
                    auto ni = std::find(next.active.begin(), next.active.end(), j) - next.active.begin();
                    auto pi = std::find(prev.inactive.begin(), prev.inactive.end(), j) - prev.inactive.begin();
                    double v = prev.dual_inactive_at(t_change)(pi);
                    // d beta_j / d(tracing direction) has the sign of v_j.
                    EXPECT_EQ(sign_of(dir * next.eta(ni)), sign_of(v));
                    ++additions;
                }
            }
        };
        check_side(path.positive_segments, +1);
        check_side(path.negative_segments, -1);
    }
    EXPECT_GT(deletions, 0);
    EXPECT_GT(additions, 0);
}

TEST(TraceProperty, AppendingOwnPredictionLeavesFitUnchanged) {
    std::mt19937_64 rng(8080);
    for (int k = 0; k < 100; ++k) {
        Instance inst = random_instance(rng, uniform_index(rng, 8, 40), uniform_index(rng, 2, 15), (k % 3 == 0) ? 0.3 : 0.0);
        LassoFit base = fit(inst.data, inst.penalty);
        LassoFit again = fit(inst.data.augmented(inst.x_new, inst.x_new.dot(base.beta)), inst.penalty);
        EXPECT_LE((again.beta - base.beta).cwiseAbs().maxCoeff(), 1e-10);
        LassoFit upd = online_update(inst.data, base, inst.x_new, inst.x_new.dot(base.beta));
        EXPECT_EQ(upd.beta, base.beta);
    }
}

TEST(OnlineUpdate, OneDimensionalExample) {
    Dataset d = two_point();
    PenaltyConfig pen{1.0, 0.0};
    LassoFit base = fit(d, pen);
    LassoFit upd = online_update(d, base, one(), 3.0);
    Matrix X = Matrix::Ones(3, 1);
    Vector y(3);
    y << 1, 3, 3;
    LassoFit cold = fit(Dataset(X, y), pen);
    EXPECT_NEAR(cold.beta(0), 2.0, 1e-12);
    EXPECT_NEAR(upd.beta(0), cold.beta(0), 1e-12);
}

TEST(OnlineUpdate, ZeroCovariateChangesNothing) {
    std::mt19937_64 rng(31);
    Instance inst = random_instance(rng, 20, 6, 0.0, -1.5, -0.5);
    LassoFit base = fit(inst.data, inst.penalty);
    LassoFit upd = online_update(inst.data, base, Vector::Zero(6), 123.0);
    EXPECT_LE((upd.beta - base.beta).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((upd.dual - base.dual).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(OnlineUpdate, MatchesColdRefit) {
    std::mt19937_64 rng(64);
    for (int k = 0; k < 40; ++k) {
        Instance inst = random_instance(rng, uniform_index(rng, 10, 40), uniform_index(rng, 2, 15), (k % 2) ? 0.5 : 0.0);
        LassoFit base = fit(inst.data, inst.penalty);
        double y = inst.x_new.dot(base.beta) + 4.0 * gaussian_vector(rng, 1)(0);
        LassoFit upd = online_update(inst.data, base, inst.x_new, y);
        LassoFit cold = fit(inst.data.augmented(inst.x_new, y), inst.penalty);
        EXPECT_LE((upd.beta - cold.beta).cwiseAbs().maxCoeff(), 1e-6);
        EXPECT_TRUE(check_kkt(inst.data.augmented(inst.x_new, y), upd, 1e-6).pass);
    }
}

TEST(Trace, BaseOnDualBoundaryUsesRefitFallback) {
    Matrix X(3, 2);
    X << 1, 0, 0, 1, 0, 0;
    Vector y(3);
    y << 2, 1, 0;
    Dataset d(X, y);
    PenaltyConfig pen{1.0, 0.0};
    LassoFit base = fit(d, pen);
    ASSERT_FALSE(base.boundary_ties.empty());
    Vector xn(2);
    xn << 0.3, 0.8;
    QueryPoint q = make_query(base, xn);
    HomotopyPath path = trace(d, base, q, -4.0, 4.0);
    EXPECT_TRUE(path.diagnostics.base_on_boundary);
    EXPECT_GE(path.diagnostics.fallback_refits, 1);
    for (double t : {-3.0, -1.0, -0.2, 0.2, 1.0, 3.5}) {
        Vector oracle = fit(d.augmented(xn, q.y_hat0 + t), pen).beta;
        EXPECT_LE((path.beta_at(t) - oracle).cwiseAbs().maxCoeff(), 1e-6) << "t " << t;
    }
}

TEST(Trace, RankDeficientGramFallsBackToRidge) {
    // Two identical columns: once both are active the Gram is singular.
    Matrix X(4, 2);
    X << 1, 1, 2, 2, -1, -1, 0.5, 0.5;
    Vector y(4);
    y << 1, 2, -1, 0.4;
    Dataset d(X, y);
    PenaltyConfig pen{0.1, 0.0};
    LassoFit base = fit(d, pen);
    Vector xn(2);
    xn << 1.0, 1.0;
    QueryPoint q = make_query(base, xn);
    HomotopyPath path = trace(d, base, q, -5.0, 5.0);
    for (double t : {-4.0, -1.0, 1.0, 4.0}) {
        Vector b = path.beta_at(t);
        Dataset aug = d.augmented(xn, q.y_hat0 + t);
        // The fit is not unique; compare objective values instead of coefficients.
        LassoFit cold = fit(aug, pen);
        EXPECT_NEAR(objective_value(aug, b, pen), cold.objective, 1e-6);
    }
}

TEST(Trace, MoreActiveThanOriginalRowsUsesAugmentedGram) {
    // p > n and a tiny lambda: the path reaches n + 1 active columns, where
    // only the augmented Gram is invertible.
    std::mt19937_64 rng(46);
    Dataset d(gaussian_matrix(rng, 5, 10), gaussian_vector(rng, 5));
    PenaltyConfig pen{0.01, 0.0};
    LassoFit base = fit(d, pen);
    Vector xn = gaussian_vector(rng, 10);
    QueryPoint q = make_query(base, xn);
    HomotopyPath path = trace(d, base, q, -30.0, 30.0);
    std::size_t widest = 0;
    for (const HomotopySegment* s : path.ordered()) {
        widest = std::max(widest, s->active.size());
        EXPECT_FALSE(s->ridge_fallback);
    }
    ASSERT_GT(widest, 5u);
    for (double t = -29.5; t < 30.0; t += 1.0) {
        Vector cold = fit(d.augmented(xn, q.y_hat0 + t), pen).beta;
        EXPECT_LE((path.beta_at(t) - cold).cwiseAbs().maxCoeff(), 1e-8) << t;
    }
}

TEST(Trace, DumpPathIsLineDelimitedJson) {
    Dataset d = two_point();
    LassoFit base = fit(d, {1.0, 0.0});
    HomotopyPath path = trace(d, base, make_query(base, one()), -10.0, 10.0);
    std::ostringstream os;
    dump_path(os, path);
    std::istringstream in(os.str());
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        EXPECT_TRUE(j.contains("t_start"));
        EXPECT_TRUE(j.contains("t_end"));
        EXPECT_TRUE(j.contains("active_size"));
        EXPECT_TRUE(j.contains("change_coordinate"));
        ++lines;
    }
    EXPECT_EQ(lines, path.ordered().size());
    EXPECT_GE(lines, 3u);  // deletion at t = -3.5 plus the positive side
}
