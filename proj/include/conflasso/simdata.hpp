#pragma once

#include "conflasso/bspline.hpp"
#include "conflasso/conformal.hpp"
#include "conflasso/lasso.hpp"
#include "conflasso/parallel.hpp"
#include "conflasso/types.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace conflasso {

enum class ModelFamily { LinearGaussian, NonlinearAdditive, HeavyTailCorrelated };
enum class DimRegime { Low, High };

inline const char* to_string(ModelFamily f) {
    switch (f) {
        case ModelFamily::LinearGaussian: return "linear_gaussian";
        case ModelFamily::NonlinearAdditive: return "nonlinear_additive";
        case ModelFamily::HeavyTailCorrelated: return "heavy_tail_correlated";
    }
    return "?";
}

struct ModelSpec {
    ModelFamily family = ModelFamily::LinearGaussian;
    DimRegime regime = DimRegime::Low;
    Index n = 100;
    Index p = 10;
    Index sparsity = 10;
    double amplitude = 1.0;
    std::uint64_t seed = 1;
    // 0 switches the noise off (debugging aid).
    double noise_scale = 1.0;

    static ModelSpec make(ModelFamily family, DimRegime regime, std::uint64_t seed) {
        ModelSpec s;
        s.family = family;
        s.regime = regime;
        s.seed = seed;
        if (regime == DimRegime::Low) {
            s.n = 100;
            s.p = 10;
            s.sparsity = 10;
            s.amplitude = 1.0;
        } else {
            s.n = 200;
            s.p = 500;
            s.sparsity = 5;
            s.amplitude = 8.0;
        }
        return s;
    }

    void validate() const {
        if (n < 1 || p < 1) throw input_error("model needs n >= 1 and p >= 1");
        if (sparsity < 0 || sparsity > p) throw input_error("sparsity must lie in [0, p]");
        if (!(amplitude > 0.0)) throw input_error("amplitude must be positive");
        if (!(noise_scale >= 0.0)) throw input_error("noise scale must be non-negative");
    }
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

struct SimulatedData {
    Dataset train;
    Matrix test_X;
    Vector test_y;
    Vector beta;  // true coefficients for the linear families, empty otherwise
};

namespace detail {

enum class ColumnLaw { Normal, Bernoulli, SkewNormal };

// Draws one row of the data-generating process; parameters are fixed per dataset.
class Process {
public:
    Process(const ModelSpec& spec, std::mt19937_64& rng) : spec_(spec) {
        std::uniform_int_distribution<int> coin(0, 1);
        auto random_sign = [&] { return coin(rng) ? 1.0 : -1.0; };
        if (spec.family == ModelFamily::NonlinearAdditive) {
            coef_ = Matrix::Zero(spec.p, 4);
            for (Index j = 0; j < spec.sparsity; ++j)
                for (Index k = 0; k < 4; ++k) coef_(j, k) = spec.amplitude * random_sign();
        } else {
            beta_ = Vector::Zero(spec.p);
            for (Index j = 0; j < spec.sparsity; ++j) beta_(j) = spec.amplitude * random_sign();
        }
        if (spec.family == ModelFamily::HeavyTailCorrelated) {
            std::uniform_int_distribution<int> law(0, 2);
            laws_.resize(static_cast<std::size_t>(spec.p + window - 1));
            for (auto& l : laws_) l = static_cast<ColumnLaw>(law(rng));
            std::uniform_real_distribution<double> u(0.0, 1.0);
            weights_.resize(window);
            double total = 0.0;
            for (auto& w : weights_) total += (w = u(rng));
            for (auto& w : weights_) w /= total;
        }
    }

    const Vector& beta() const { return beta_; }

    void draw(std::mt19937_64& rng, Eigen::Ref<Vector> x, double& y) {
        std::normal_distribution<double> normal(0.0, 1.0);
        if (spec_.family == ModelFamily::HeavyTailCorrelated) {
            std::vector<double> z(laws_.size());
            for (std::size_t k = 0; k < z.size(); ++k) z[k] = standardized(laws_[k], rng);
            for (Index j = 0; j < spec_.p; ++j) {
                double s = 0.0;
                for (std::size_t w = 0; w < weights_.size(); ++w) s += weights_[w] * z[static_cast<std::size_t>(j) + w];
                x(j) = s;
            }
            std::student_t_distribution<double> t2(2.0);
            y = x.dot(beta_) + spec_.noise_scale * t2(rng);
            return;
        }
        for (Index j = 0; j < spec_.p; ++j) x(j) = normal(rng);
        double signal = 0.0;
        if (spec_.family == ModelFamily::LinearGaussian) {
            signal = x.dot(beta_);
        } else {
            for (Index j = 0; j < spec_.sparsity; ++j) signal += coef_.row(j).dot(additive_model_features(x(j)));
        }
        y = signal + spec_.noise_scale * normal(rng);
    }

    static constexpr std::size_t window = 3;

private:
    // Zero mean, unit variance versions of the three column laws.
    static double standardized(ColumnLaw law, std::mt19937_64& rng) {
        std::normal_distribution<double> normal(0.0, 1.0);
        switch (law) {
            case ColumnLaw::Normal: return normal(rng);
            case ColumnLaw::Bernoulli: {
                std::bernoulli_distribution b(0.5);
                return b(rng) ? 1.0 : -1.0;
            }
            case ColumnLaw::SkewNormal: {
                const double shape = 5.0;
                const double delta = shape / std::sqrt(1.0 + shape * shape);
                double z1 = normal(rng);
                double z2 = normal(rng);
                double v = delta * std::abs(z1) + std::sqrt(1.0 - delta * delta) * z2;
                const double mean = delta * std::sqrt(2.0 / M_PI);
                const double sd = std::sqrt(1.0 - 2.0 * delta * delta / M_PI);
                return (v - mean) / sd;
            }
        }
        return 0.0;
    }

    ModelSpec spec_;
    Vector beta_;
    Matrix coef_;
    std::vector<ColumnLaw> laws_;
    std::vector<double> weights_;
};

}  // namespace detail

/// Training set and i.i.d. test pairs from the same process; reproducible
/// from spec.seed.
inline SimulatedData generate(const ModelSpec& spec, Index n_train, Index n_test) {
    spec.validate();
    if (n_train < 1 || n_test < 0) throw input_error("sample counts must be positive");
    std::mt19937_64 rng(spec.seed);
    detail::Process process(spec, rng);
    Matrix X(n_train, spec.p);
    Vector y(n_train);
    Vector row(spec.p);
    for (Index i = 0; i < n_train; ++i) {
        process.draw(rng, row, y(i));
        X.row(i) = row.transpose();
    }
    Matrix TX(n_test, spec.p);
    Vector ty(n_test);
    for (Index i = 0; i < n_test; ++i) {
        process.draw(rng, row, ty(i));
        TX.row(i) = row.transpose();
    }
    return SimulatedData{Dataset(std::move(X), std::move(y)), std::move(TX), std::move(ty), process.beta()};
}

/// K-fold cross-validated lambda over a log grid below lambda_max. Each fold
/// fits (K-1)/K of the data under an unnormalized objective, so the chosen
/// value is rescaled by K/(K-1) to the full sample.
inline double cv_lambda(const Dataset& data, Index folds, double rho, std::uint64_t seed, Index grid_size = 30,
                        double min_ratio = 1e-3) {
    if (folds < 2 || folds > data.n()) throw input_error("fold count must lie in [2, n]");
    std::vector<Index> idx(static_cast<std::size_t>(data.n()));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);

    double top = lambda_max(data);
    if (!(top > 0.0)) top = 1.0;
    std::vector<double> grid(static_cast<std::size_t>(grid_size));
    for (Index g = 0; g < grid_size; ++g)
        grid[static_cast<std::size_t>(g)] =
            top * std::pow(min_ratio, static_cast<double>(g) / static_cast<double>(std::max<Index>(grid_size - 1, 1)));

    std::vector<double> sse(grid.size(), 0.0);
    for (Index f = 0; f < folds; ++f) {
        std::vector<Index> tr, te;
        for (std::size_t k = 0; k < idx.size(); ++k)
            (static_cast<Index>(k) % folds == f ? te : tr).push_back(idx[k]);
        Dataset train = data.subset(tr);
        Dataset test = data.subset(te);
        Vector warm = Vector::Zero(data.p());
        for (std::size_t g = 0; g < grid.size(); ++g) {
            LassoFit lf = fit(train, PenaltyConfig{grid[g], rho}, SolverOptions{}, &warm);
            warm = lf.beta;
            sse[g] += (test.y() - test.X() * lf.beta).squaredNorm();
        }
    }
    std::size_t best = static_cast<std::size_t>(std::min_element(sse.begin(), sse.end()) - sse.begin());
    return grid[best] * static_cast<double>(folds) / static_cast<double>(folds - 1);
}

struct LambdaRule {
    enum class Kind { Fixed, CvMedian } kind = Kind::CvMedian;
    double value = 1.0;
    Index folds = 10;
    Index samples = 10;
};

/// Median of cross-validated lambdas over independent samples of the model.
inline double cv_median_lambda(const ModelSpec& spec, const LambdaRule& rule, double rho, unsigned threads = 1) {
    std::vector<double> picks(static_cast<std::size_t>(rule.samples));
    parallel_for(picks.size(), threads, [&](std::size_t s) {
        ModelSpec local = spec;
        local.seed = mix_seed(spec.seed, 1000003 + s);
        SimulatedData d = generate(local, spec.n, 0);
        picks[s] = cv_lambda(d.train, rule.folds, rho, mix_seed(local.seed, 7));
    });
    std::sort(picks.begin(), picks.end());
    std::size_t m = picks.size();
    return m % 2 ? picks[m / 2] : 0.5 * (picks[m / 2 - 1] + picks[m / 2]);
}

enum class Method { Exact, Grid, Split };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::Exact: return "exact";
        case Method::Grid: return "grid";
        case Method::Split: return "split";
    }
    return "?";
}

struct ExperimentConfig {
    ModelSpec spec;
    double alpha = 0.1;
    LambdaRule lambda_rule;
    double rho = 0.0;
    std::vector<Method> methods{Method::Exact, Method::Grid, Method::Split};
    Index reps = 50;
    Index n_test = 100;
    Index grid_points = 100;
    double split_fraction = 0.5;
    bool fast = true;
    bool early_stop_anchor = false;
    unsigned threads = 1;
};

struct RepRecord {
    Index rep = 0;
    Method method = Method::Exact;
    double coverage = 0.0;
    double length = 0.0;
    double seconds = 0.0;
    double segments_per_query = 0.0;
    Index fallbacks = 0;
};

struct MethodStats {
    Method method = Method::Exact;
    double coverage = 0.0;
    double coverage_se = 0.0;
    double length = 0.0;
    double length_se = 0.0;
    double seconds = 0.0;
    double seconds_se = 0.0;
    double segments_per_query = 0.0;
    Index fallbacks = 0;
    Index reps_ok = 0;
};

struct CoverageReport {
    ExperimentConfig config;
    double lambda = 0.0;
    std::vector<MethodStats> methods;
    std::vector<RepRecord> raw;
    Index failed_reps = 0;
    // Only defined when the noise has a finite second moment.
    std::optional<double> noise_variance;

    const MethodStats* find(Method m) const {
        for (const auto& s : methods)
            if (s.method == m) return &s;
        return nullptr;
    }
};

namespace detail {

inline void mean_se(const std::vector<double>& v, double& mean, double& se) {
    mean = 0.0;
    se = 0.0;
    if (v.empty()) return;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (v.size() < 2) return;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace detail

inline CoverageReport run_experiment(const ExperimentConfig& cfg) {
    if (cfg.methods.empty()) throw input_error("at least one method is required");
    for (std::size_t a = 0; a < cfg.methods.size(); ++a)
        for (std::size_t b = a + 1; b < cfg.methods.size(); ++b)
            if (cfg.methods[a] == cfg.methods[b]) throw input_error("methods must not repeat");
    validate_alpha(cfg.alpha);
    if (cfg.reps < 1 || cfg.n_test < 1) throw input_error("reps and n_test must be positive");
    CoverageReport report;
    report.config = cfg;
    report.lambda = cfg.lambda_rule.kind == LambdaRule::Kind::Fixed
                        ? cfg.lambda_rule.value
                        : cv_median_lambda(cfg.spec, cfg.lambda_rule, cfg.rho, cfg.threads);
    if (cfg.spec.family != ModelFamily::HeavyTailCorrelated)
        report.noise_variance = cfg.spec.noise_scale * cfg.spec.noise_scale;
    const PenaltyConfig penalty{report.lambda, cfg.rho};

    std::vector<std::vector<RepRecord>> per_rep(static_cast<std::size_t>(cfg.reps));
    std::vector<char> failed(static_cast<std::size_t>(cfg.reps), 0);
    parallel_for(per_rep.size(), cfg.threads, [&](std::size_t r) {
        using clock = std::chrono::steady_clock;
        ModelSpec local = cfg.spec;
        local.seed = mix_seed(cfg.spec.seed, r);
        try {
            SimulatedData d = generate(local, cfg.spec.n, cfg.n_test);
            Range range = default_range(d.train.y());
            const double nt = static_cast<double>(cfg.n_test);
            for (Method m : cfg.methods) {
                RepRecord rec;
                rec.rep = static_cast<Index>(r);
                rec.method = m;
                auto t0 = clock::now();
                double covered = 0.0;
                double length = 0.0;
                double segments = 0.0;
                if (m == Method::Exact) {
                    LassoFit base = fit(d.train, penalty);
                    ConformalOptions opt;
                    opt.fast = cfg.fast;
                    opt.early_stop_anchor = cfg.early_stop_anchor;
                    for (Index i = 0; i < cfg.n_test; ++i) {
                        PredictionSet s = exact_set(d.train, base, d.test_X.row(i).transpose(), cfg.alpha, range, opt);
                        covered += s.contains(d.test_y(i));
                        length += s.length();
                        segments += static_cast<double>(s.n_segments);
                        rec.fallbacks += s.n_fallbacks;
                    }
                } else if (m == Method::Grid) {
                    double step = (range.hi - range.lo) / static_cast<double>(std::max<Index>(cfg.grid_points - 1, 1));
                    for (Index i = 0; i < cfg.n_test; ++i) {
                        GridResult g = grid_set(d.train, d.test_X.row(i).transpose(), penalty, cfg.alpha, range, step);
                        PredictionSet s = grid_to_set(g, cfg.alpha, range);
                        covered += s.contains(d.test_y(i));
                        length += s.length();
                    }
                } else {
                    SplitConformal split(d.train, penalty, cfg.split_fraction, mix_seed(local.seed, 99));
                    for (Index i = 0; i < cfg.n_test; ++i) {
                        PredictionSet s = split.predict(d.test_X.row(i).transpose(), cfg.alpha, range);
                        covered += s.contains(d.test_y(i));
                        length += s.length();
                    }
                }
                rec.seconds = std::chrono::duration<double>(clock::now() - t0).count();
                rec.coverage = covered / nt;
                rec.length = length / nt;
                rec.segments_per_query = segments / nt;
                per_rep[r].push_back(rec);
            }
        } catch (const numerical_error& e) {
            failed[r] = 1;
            per_rep[r].clear();
            std::cerr << "rep " << r << " aborted: " << e.what() << '\n';
        }
    });

    for (std::size_t r = 0; r < per_rep.size(); ++r) {
        report.failed_reps += failed[r];
        for (const auto& rec : per_rep[r]) report.raw.push_back(rec);
    }
    for (Method m : cfg.methods) {
        MethodStats st;
        st.method = m;
        std::vector<double> cov, len, sec;
        double seg = 0.0;
        for (const auto& rec : report.raw) {
            if (rec.method != m) continue;
            cov.push_back(rec.coverage);
            len.push_back(rec.length);
            sec.push_back(rec.seconds);
            seg += rec.segments_per_query;
            st.fallbacks += rec.fallbacks;
        }
        st.reps_ok = static_cast<Index>(cov.size());
        detail::mean_se(cov, st.coverage, st.coverage_se);
        detail::mean_se(len, st.length, st.length_se);
        detail::mean_se(sec, st.seconds, st.seconds_se);
        st.segments_per_query = cov.empty() ? 0.0 : seg / static_cast<double>(cov.size());
        report.methods.push_back(st);
    }
    return report;
}

}  // namespace conflasso
