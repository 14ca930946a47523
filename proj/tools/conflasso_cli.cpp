#include "conflasso/conflasso.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

using namespace conflasso;

namespace {

struct Common {
    std::string data;
    std::string query;
    std::string out;
    std::string format = "json";
    std::string range = "auto";
    std::string method = "exact";
    std::string dump;
    double lambda = 1.0;
    double rho = 0.0;
    double alpha = 0.1;
    double grid_step = 0.0;
    double split_frac = 0.5;
    std::uint64_t seed = 1;
    unsigned threads = default_threads();
    bool header = false;
    bool standardize = false;
    bool early_stop = false;
    Index row = 0;
};

// Column centring and scaling, with the response centred only.
struct Standardizer {
    Vector mean;
    Vector scale;
    double y_mean = 0.0;

    static Standardizer identity(Index p) { return {Vector::Zero(p), Vector::Ones(p), 0.0}; }

    static Standardizer from(const Dataset& d) {
        Standardizer s;
        s.mean = d.X().colwise().mean().transpose();
        s.scale = ((d.X().rowwise() - s.mean.transpose()).colwise().squaredNorm().transpose() /
                   static_cast<double>(d.n()))
                      .cwiseSqrt();
        for (Index j = 0; j < s.scale.size(); ++j)
            if (s.scale(j) == 0.0) s.scale(j) = 1.0;
        s.y_mean = d.y().mean();
        return s;
    }

    Dataset apply(const Dataset& d) const {
        Matrix X = (d.X().rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
        Vector y = d.y().array() - y_mean;
        return Dataset(X, y);
    }

    Vector apply(const Vector& x) const { return (x - mean).cwiseQuotient(scale); }
};

Range parse_range(const std::string& text, const Vector& y) {
    if (text == "auto") return default_range(y);
    auto comma = text.find(',');
    if (comma == std::string::npos) throw input_error("--range expects lo,hi or auto");
    Range r;
    try {
        r.lo = std::stod(text.substr(0, comma));
        r.hi = std::stod(text.substr(comma + 1));
    } catch (const std::exception&) {
        throw input_error("cannot parse --range '" + text + "'");
    }
    if (!(r.lo < r.hi)) throw input_error("--range needs lo < hi");
    return r;
}

class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty()) {
            file_ = std::make_unique<std::ofstream>(path);
            if (!*file_) throw input_error("cannot open '" + path + "' for writing");
        }
    }
    std::ostream& stream() { return file_ ? *file_ : std::cout; }

private:
    std::unique_ptr<std::ofstream> file_;
};

void check_format(const std::string& f) {
    if (f != "json" && f != "csv") throw input_error("--format must be json or csv");
}

int run_fit(const Common& c) {
    check_format(c.format);
    Dataset data = ingest_csv(c.data, c.header);
    Standardizer st = c.standardize ? Standardizer::from(data) : Standardizer::identity(data.p());
    Dataset work = st.apply(data);
    PenaltyConfig pen{c.lambda, c.rho};
    LassoFit f = fit(work, pen);
    KktReport kkt = check_kkt(work, f, 1e-6);
    Output out(c.out);
    std::ostream& os = out.stream();
    os.precision(17);
    if (c.format == "csv") {
        os << "coordinate,beta,dual\n";
        for (Index j = 0; j < data.p(); ++j) os << j << ',' << f.beta(j) << ',' << f.dual(j) << '\n';
    } else {
        nlohmann::json j = {{"n", data.n()},
                            {"p", data.p()},
                            {"lambda", pen.lambda},
                            {"rho", pen.rho},
                            {"beta", std::vector<double>(f.beta.data(), f.beta.data() + f.beta.size())},
                            {"active", f.active},
                            {"objective", f.objective},
                            {"sweeps", f.sweeps},
                            {"kkt_pass", kkt.pass},
                            {"standardized", c.standardize}};
        os << j.dump() << '\n';
    }
    return 0;
}

int run_predict(const Common& c) {
    check_format(c.format);
    validate_alpha(c.alpha);
    if (c.method != "exact" && c.method != "exact-fast" && c.method != "grid" && c.method != "split")
        throw input_error("--method must be exact, exact-fast, grid or split");
    Dataset data = ingest_csv(c.data, c.header);
    Matrix queries = read_csv_matrix(c.query, c.header);
    if (queries.cols() != data.p())
        throw dimension_mismatch("query file has " + std::to_string(queries.cols()) + " columns, data has " +
                                 std::to_string(data.p()) + " covariates");
    Standardizer st = c.standardize ? Standardizer::from(data) : Standardizer::identity(data.p());
    Dataset work = st.apply(data);
    const PenaltyConfig pen{c.lambda, c.rho};
    pen.validate();
    Range range = parse_range(c.range, data.y());
    Range work_range{range.lo - st.y_mean, range.hi - st.y_mean};
    double step = c.grid_step > 0.0 ? c.grid_step : (range.hi - range.lo) / 99.0;

    LassoFit base = fit(work, pen);
    std::unique_ptr<SplitConformal> split;
    if (c.method == "split") split = std::make_unique<SplitConformal>(work, pen, c.split_frac, c.seed);
    ConformalOptions opt;
    opt.fast = c.method == "exact-fast";
    opt.early_stop_anchor = c.early_stop;

    const auto nq = static_cast<std::size_t>(queries.rows());
    std::vector<PredictionSet> sets(nq);
    std::vector<double> preds(nq);
    std::vector<std::string> dumps(nq);
    parallel_for(nq, c.threads, [&](std::size_t q) {
        Vector x = st.apply(Vector(queries.row(static_cast<Index>(q)).transpose()));
        preds[q] = x.dot(base.beta) + st.y_mean;
        PredictionSet s;
        if (c.method == "grid") {
            GridResult g = grid_set(work, x, pen, c.alpha, work_range, step);
            s = grid_to_set(g, c.alpha, work_range);
        } else if (c.method == "split") {
            s = split->predict(x, c.alpha, work_range);
        } else {
            s = exact_set(work, base, x, c.alpha, work_range, opt);
            if (!c.dump.empty()) {
                std::ostringstream os;
                HomotopyPath path = trace(work, base, make_query(base, x), std::min(0.0, work_range.lo - preds[q] + st.y_mean),
                                          std::max(0.0, work_range.hi - preds[q] + st.y_mean));
                dump_path(os, path);
                dumps[q] = os.str();
            }
        }
        for (auto& iv : s.intervals) {
            iv.lo = iv.lo_source == BoundarySource::RangeClip && iv.lo <= work_range.lo ? range.lo : iv.lo + st.y_mean;
            iv.hi = iv.hi_source == BoundarySource::RangeClip && iv.hi >= work_range.hi ? range.hi : iv.hi + st.y_mean;
        }
        sets[q] = std::move(s);
    });

    Output out(c.out);
    std::ostream& os = out.stream();
    os.precision(17);
    if (c.format == "csv") os << "query,prediction,lo,hi,lo_source,hi_source\n";
    for (std::size_t q = 0; q < nq; ++q) {
        if (c.format == "csv") {
            for (const auto& iv : sets[q].intervals)
                os << q << ',' << preds[q] << ',' << iv.lo << ',' << iv.hi << ',' << to_string(iv.lo_source) << ','
                   << to_string(iv.hi_source) << '\n';
        } else {
            nlohmann::json j = to_json(sets[q]);
            j["query"] = q;
            j["prediction"] = preds[q];
            j["method"] = c.method;
            j["clipped_infinite"] = sets[q].clipped_infinite;
            os << j.dump() << '\n';
        }
    }
    if (!c.dump.empty()) {
        std::ofstream d(c.dump);
        if (!d) throw input_error("cannot open '" + c.dump + "' for writing");
        for (std::size_t q = 0; q < nq; ++q) {
            std::istringstream lines(dumps[q]);
            std::string line;
            while (std::getline(lines, line)) d << "{\"query\":" << q << ',' << line.substr(1) << '\n';
        }
    }
    return 0;
}

struct SimOptions {
    std::string model = "I";
    std::string regime = "low";
    std::string methods = "exact,grid,split";
    std::string raw;
    Index reps = 50;
    Index n_test = 100;
    Index grid_points = 100;
    Index cv_samples = 10;
    Index cv_folds = 10;
    double noise_scale = 1.0;
    bool fixed_lambda = false;
};

ExperimentConfig make_config(const Common& c, const SimOptions& s) {
    ModelFamily fam;
    if (s.model == "I") fam = ModelFamily::LinearGaussian;
    else if (s.model == "II") fam = ModelFamily::NonlinearAdditive;
    else if (s.model == "III") fam = ModelFamily::HeavyTailCorrelated;
    else throw input_error("--model must be I, II or III");
    DimRegime reg;
    if (s.regime == "low") reg = DimRegime::Low;
    else if (s.regime == "high") reg = DimRegime::High;
    else throw input_error("--regime must be low or high");

    ExperimentConfig cfg;
    cfg.spec = ModelSpec::make(fam, reg, c.seed);
    cfg.spec.noise_scale = s.noise_scale;
    cfg.spec.validate();
    cfg.alpha = c.alpha;
    cfg.rho = c.rho;
    if (s.fixed_lambda) {
        cfg.lambda_rule.kind = LambdaRule::Kind::Fixed;
        cfg.lambda_rule.value = c.lambda;
    }
    cfg.lambda_rule.samples = s.cv_samples;
    cfg.lambda_rule.folds = s.cv_folds;
    cfg.reps = s.reps;
    cfg.n_test = s.n_test;
    cfg.grid_points = s.grid_points;
    cfg.split_fraction = c.split_frac;
    cfg.early_stop_anchor = c.early_stop;
    cfg.fast = c.method == "exact-fast";
    cfg.threads = c.threads;
    cfg.methods.clear();
    std::stringstream ss(s.methods);
    std::string m;
    while (std::getline(ss, m, ',')) {
        if (m == "exact") cfg.methods.push_back(Method::Exact);
        else if (m == "grid") cfg.methods.push_back(Method::Grid);
        else if (m == "split") cfg.methods.push_back(Method::Split);
        else throw input_error("unknown method '" + m + "' in --methods");
    }
    return cfg;
}

void write_raw(const std::string& path, const CoverageReport& r) {
    if (path.empty()) return;
    std::ofstream f(path);
    if (!f) throw input_error("cannot open '" + path + "' for writing");
    f.precision(17);
    f << "rep,method,coverage,length,seconds,segments_per_query,fallbacks\n";
    for (const RepRecord& rec : r.raw)
        f << rec.rep << ',' << to_string(rec.method) << ',' << rec.coverage << ',' << rec.length << ',' << rec.seconds
          << ',' << rec.segments_per_query << ',' << rec.fallbacks << '\n';
}

int run_simulate(const Common& c, const SimOptions& s) {
    check_format(c.format);
    CoverageReport r = run_experiment(make_config(c, s));
    write_raw(s.raw, r);
    Output out(c.out);
    std::ostream& os = out.stream();
    os.precision(17);
    if (c.format == "csv") {
        os << "model,regime,method,lambda,coverage,coverage_se,length,length_se,seconds,seconds_se,reps_ok,failed_reps\n";
        for (const MethodStats& m : r.methods)
            os << s.model << ',' << s.regime << ',' << to_string(m.method) << ',' << r.lambda << ',' << m.coverage << ','
               << m.coverage_se << ',' << m.length << ',' << m.length_se << ',' << m.seconds << ',' << m.seconds_se
               << ',' << m.reps_ok << ',' << r.failed_reps << '\n';
    } else {
        nlohmann::json j = {{"model", s.model}, {"regime", s.regime}, {"alpha", c.alpha}, {"lambda", r.lambda},
                            {"reps", s.reps},   {"failed_reps", r.failed_reps}};
        if (r.noise_variance) j["noise_variance"] = *r.noise_variance;
        j["methods"] = nlohmann::json::array();
        for (const MethodStats& m : r.methods)
            j["methods"].push_back({{"method", to_string(m.method)},
                                    {"coverage", m.coverage},
                                    {"coverage_se", m.coverage_se},
                                    {"length", m.length},
                                    {"length_se", m.length_se},
                                    {"seconds", m.seconds},
                                    {"seconds_se", m.seconds_se},
                                    {"reps_ok", m.reps_ok}});
        os << j.dump() << '\n';
    }
    return 0;
}

int run_bench(const Common& c, const SimOptions& s) {
    CoverageReport r = run_experiment(make_config(c, s));
    write_raw(s.raw, r);
    Output out(c.out);
    std::ostream& os = out.stream();
    os.precision(6);
    os << "method,seconds_per_rep,seconds_se,ms_per_query,segments_per_query,fallbacks,coverage,length\n";
    for (const MethodStats& m : r.methods)
        os << to_string(m.method) << ',' << m.seconds << ',' << m.seconds_se << ','
           << 1e3 * m.seconds / static_cast<double>(s.n_test) << ',' << m.segments_per_query << ',' << m.fallbacks
           << ',' << m.coverage << ',' << m.length << '\n';
    return 0;
}

int run_dump_path(const Common& c) {
    Dataset data = ingest_csv(c.data, c.header);
    Matrix queries = read_csv_matrix(c.query, c.header);
    if (queries.cols() != data.p()) throw dimension_mismatch("query width does not match the data");
    if (c.row < 0 || c.row >= queries.rows()) throw input_error("--row is outside the query file");
    PenaltyConfig pen{c.lambda, c.rho};
    LassoFit base = fit(data, pen);
    QueryPoint q = make_query(base, queries.row(c.row).transpose());
    Range range = parse_range(c.range, data.y());
    HomotopyPath path = trace(data, base, q, std::min(0.0, range.lo - q.y_hat0), std::max(0.0, range.hi - q.y_hat0));
    Output out(c.out);
    dump_path(out.stream(), path);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exact conformal prediction sets for the Lasso and elastic net"};
    app.require_subcommand(1);
    Common c;
    SimOptions s;

    auto add_data = [&](CLI::App* sub) {
        sub->add_option("--data", c.data, "training CSV, last column is the response")->required();
        sub->add_flag("--header", c.header, "CSV files start with a header line");
    };
    auto add_penalty = [&](CLI::App* sub) {
        sub->add_option("--lambda", c.lambda, "l1 penalty")->check(CLI::PositiveNumber);
        sub->add_option("--rho", c.rho, "ridge penalty")->check(CLI::NonNegativeNumber);
    };
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--out", c.out, "output file (default stdout)");
        sub->add_option("--format", c.format, "json or csv");
        sub->add_option("--threads", c.threads, "worker threads (default CONFLASSO_THREADS)")
            ->check(CLI::PositiveNumber);
        sub->add_option("--seed", c.seed, "master seed");
    };

    auto* fit_cmd = app.add_subcommand("fit", "fit the (elastic-net) Lasso");
    add_data(fit_cmd);
    add_penalty(fit_cmd);
    add_common(fit_cmd);
    fit_cmd->add_flag("--standardize", c.standardize, "centre and scale columns, centre the response");

    auto* pred_cmd = app.add_subcommand("predict", "conformal prediction sets for query rows");
    add_data(pred_cmd);
    add_penalty(pred_cmd);
    add_common(pred_cmd);
    pred_cmd->add_option("--query", c.query, "query CSV of covariates")->required();
    pred_cmd->add_option("--alpha", c.alpha, "miscoverage level");
    pred_cmd->add_option("--method", c.method, "exact, exact-fast, grid or split");
    pred_cmd->add_option("--grid-step", c.grid_step, "grid spacing (default: 100 points over the range)")
        ->check(CLI::PositiveNumber);
    pred_cmd->add_option("--split-frac", c.split_frac, "fraction used for fitting in split conformal");
    pred_cmd->add_option("--range", c.range, "search range lo,hi or auto");
    pred_cmd->add_flag("--standardize", c.standardize, "centre and scale columns, centre the response");
    pred_cmd->add_flag("--early-stop-anchor", c.early_stop, "only the interval containing the prediction");
    pred_cmd->add_option("--dump-path", c.dump, "write homotopy segments as JSON lines");

    auto add_sim = [&](CLI::App* sub) {
        add_common(sub);
        sub->add_option("--model", s.model, "I, II or III");
        sub->add_option("--regime", s.regime, "low or high");
        sub->add_option("--methods", s.methods, "comma list of exact, grid, split");
        sub->add_option("--method", c.method, "exact or exact-fast for the exact method");
        sub->add_option("--alpha", c.alpha, "miscoverage level");
        sub->add_option("--rho", c.rho, "ridge penalty")->check(CLI::NonNegativeNumber);
        sub->add_option("--lambda", c.lambda, "fixed l1 penalty (default: median of CV picks)")
            ->check(CLI::PositiveNumber)
            ->each([&](const std::string&) { s.fixed_lambda = true; });
        sub->add_option("--reps", s.reps, "replications")->check(CLI::PositiveNumber);
        sub->add_option("--n-test", s.n_test, "test points per replication")->check(CLI::PositiveNumber);
        sub->add_option("--grid-points", s.grid_points, "grid size for the grid method")->check(CLI::PositiveNumber);
        sub->add_option("--split-frac", c.split_frac, "fraction used for fitting in split conformal");
        sub->add_option("--cv-samples", s.cv_samples, "samples in the CV-median lambda rule")->check(CLI::PositiveNumber);
        sub->add_option("--cv-folds", s.cv_folds, "folds in the CV-median lambda rule");
        sub->add_option("--noise-scale", s.noise_scale, "noise multiplier, 0 switches noise off");
        sub->add_option("--raw", s.raw, "per-replication CSV");
        sub->add_flag("--early-stop-anchor", c.early_stop, "only the interval containing the prediction");
    };
    auto* sim_cmd = app.add_subcommand("simulate", "coverage experiment on a synthetic model");
    add_sim(sim_cmd);
    auto* bench_cmd = app.add_subcommand("bench", "timing table on a synthetic model");
    add_sim(bench_cmd);

    auto* dump_cmd = app.add_subcommand("dump-path", "homotopy segments for one query row");
    add_data(dump_cmd);
    add_penalty(dump_cmd);
    dump_cmd->add_option("--query", c.query, "query CSV of covariates")->required();
    dump_cmd->add_option("--row", c.row, "query row (0-based)");
    dump_cmd->add_option("--range", c.range, "search range lo,hi or auto");
    dump_cmd->add_option("--out", c.out, "output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*fit_cmd) return run_fit(c);
        if (*pred_cmd) return run_predict(c);
        if (*sim_cmd) return run_simulate(c, s);
        if (*bench_cmd) {
            if (bench_cmd->count("--reps") == 0) s.reps = 1;
            return run_bench(c, s);
        }
        if (*dump_cmd) return run_dump_path(c);
    } catch (const input_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const numerical_error& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
