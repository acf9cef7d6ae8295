#pragma once
// End-to-end SMAHP (penalized screening -> pair SIS -> joint significance), the SIS+SIS
// and naive comparators, and the replicate benchmark runner.

#include <smahp/aft.hpp>
#include <smahp/core.hpp>
#include <smahp/detail/parallel.hpp>
#include <smahp/detail/rng.hpp>
#include <smahp/gehan.hpp>
#include <smahp/inference.hpp>
#include <smahp/penalized_lm.hpp>
#include <smahp/screening.hpp>
#include <smahp/simulation.hpp>

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace smahp {

enum class Method { smahp, sis_sis, naive };

inline constexpr std::string_view to_string(Method m)
{
    switch (m) {
    case Method::smahp: return "smahp";
    case Method::sis_sis: return "sis-sis";
    case Method::naive: return "naive";
    }
    return "?";
}

inline std::optional<Method> parse_method(std::string_view s)
{
    if (s == "smahp") return Method::smahp;
    if (s == "sis-sis" || s == "sis_sis" || s == "sissis") return Method::sis_sis;
    if (s == "naive") return Method::naive;
    return std::nullopt;
}

struct PipelineConfig {
    PenaltySpec step1_outcome_penalty = [] {
        PenaltySpec s;
        s.family = PenaltyFamily::elastic_net;
        s.gamma = 0.5;
        return s;
    }();
    PenaltyFamily step1_mediation_penalty = PenaltyFamily::mcp;
    double mediation_tau = 3.0;
    double mediation_gamma = 0.5;  // used when the mediation penalty is elastic_net
    double sis_multiplier = 1.0;
    double fdr_q = 0.05;
    AftSpec aft;
    int cv_folds_gehan = 5;
    int cv_folds_lm = 10;
    int n_lambda = 50;
    double lambda_min_ratio = 0.01;
    std::optional<std::pair<int, int>> prescreen;  // (genes, proteins)
    std::uint64_t seed = 1;
    // looser than the solver defaults: the selected sets match, at a third of the cost
    GehanSolverOptions gehan = [] {
        GehanSolverOptions g;
        g.tol = 1e-7;
        g.smoothing = {1e-2, 1e-4};
        return g;
    }();

    void validate() const
    {
        if (step1_outcome_penalty.family == PenaltyFamily::mcp)
            throw Error(ErrorCode::InvalidConfig, "step1_outcome_penalty must be a convex family");
        if (step1_mediation_penalty != PenaltyFamily::mcp && step1_mediation_penalty != PenaltyFamily::elastic_net &&
            step1_mediation_penalty != PenaltyFamily::lasso)
            throw Error(ErrorCode::InvalidConfig, "step1_mediation_penalty must be mcp, elastic_net or lasso");
        if (!(mediation_tau > 1.0)) throw Error(ErrorCode::InvalidTau, "mediation_tau must exceed 1");
        if (!(sis_multiplier > 0.0)) throw Error(ErrorCode::InvalidConfig, "sis_multiplier must be positive");
        if (!(fdr_q > 0.0 && fdr_q < 1.0)) throw Error(ErrorCode::InvalidConfig, "fdr_q must lie in (0, 1)");
        if (cv_folds_gehan < 2 || cv_folds_lm < 2) throw Error(ErrorCode::InvalidConfig, "cv folds must be >= 2");
        if (n_lambda < 1 || !(lambda_min_ratio > 0.0 && lambda_min_ratio < 1.0))
            throw Error(ErrorCode::InvalidConfig, "invalid lambda path settings");
        if (prescreen && (prescreen->first < 1 || prescreen->second < 1))
            throw Error(ErrorCode::InvalidConfig, "prescreen sizes must be positive");
        if (step1_outcome_penalty.feature_weights.size() != 0 || !step1_outcome_penalty.groups.empty())
            throw Error(ErrorCode::InvalidConfig, "feature weights and groups are not supported by the pipeline");
        step1_outcome_penalty.validate(0);
    }

    PenaltySpec mediation_spec() const
    {
        PenaltySpec s;
        s.family = step1_mediation_penalty;
        s.tau = mediation_tau;
        s.gamma = step1_mediation_penalty == PenaltyFamily::lasso ? 1.0 : mediation_gamma;
        return s;
    }
};

/// Key/value echo of the configuration (keys match the config-file grammar).
inline std::vector<std::pair<std::string, std::string>> config_echo(const PipelineConfig& c)
{
    auto num = [](double v) {
        std::ostringstream os;
        os.precision(10);
        os << v;
        return os.str();
    };
    std::vector<std::pair<std::string, std::string>> out{
        {"step1_outcome_penalty", std::string(to_string(c.step1_outcome_penalty.family))},
        {"step1_outcome_gamma", num(c.step1_outcome_penalty.gamma)},
        {"step1_mediation_penalty", std::string(to_string(c.step1_mediation_penalty))},
        {"mediation_tau", num(c.mediation_tau)},
        {"mediation_gamma", num(c.mediation_gamma)},
        {"sis_multiplier", num(c.sis_multiplier)},
        {"fdr_q", num(c.fdr_q)},
        {"aft_family", std::string(to_string(c.aft.family))},
        {"cv_folds_gehan", std::to_string(c.cv_folds_gehan)},
        {"cv_folds_lm", std::to_string(c.cv_folds_lm)},
        {"n_lambda", std::to_string(c.n_lambda)},
        {"lambda_min_ratio", num(c.lambda_min_ratio)},
        {"prescreen_genes", c.prescreen ? std::to_string(c.prescreen->first) : "off"},
        {"prescreen_proteins", c.prescreen ? std::to_string(c.prescreen->second) : "off"},
        {"seed", std::to_string(c.seed)},
    };
    return out;
}

struct AnalysisReport {
    std::string method;
    ActiveSets active_sets;
    std::vector<MediationRecord> records;
    std::map<int, double> nde;
    std::map<int, double> global_nie;
    std::vector<std::pair<std::string, double>> timings;  // seconds
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<std::string> warnings;
    std::vector<std::string> exposure_names;
    std::vector<std::string> mediator_names;
    std::size_t pairs_tested = 0;

    std::set<GenePair> significant_pairs() const
    {
        std::set<GenePair> out;
        for (const auto& r : records)
            if (r.significant) out.insert({r.gene, r.mediator});
        return out;
    }
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <class F>
auto tagged(const char* step, F&& f) -> decltype(f())
{
    try {
        return f();
    } catch (const Error& e) {
        throw Error(e.code(), std::string(step) + ": " + e.what());
    }
}

inline std::set<int> to_original(const FitResult& fit, const IndexVector& cols)
{
    std::set<int> out;
    for (int j : fit.active()) out.insert(cols[static_cast<std::size_t>(j)]);
    return out;
}

inline Matrix select_cols(const Matrix& m, const IndexVector& cols)
{
    Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = m.col(cols[c]);
    return out;
}

inline Dataset prepare(const Dataset& in, const PipelineConfig& cfg, AnalysisReport& rep)
{
    cfg.validate();
    Dataset d = in;
    d.fill_default_names();
    validate_dataset(d);
    if (cfg.prescreen) {
        const auto [g, pr] = *cfg.prescreen;
        if (g > d.p() || pr > d.k())
            throw Error(ErrorCode::OutOfRange, "prescreen sizes exceed available columns");
        d = univariate_prescreen(d, g, pr, cfg.aft).data;
        rep.warnings.push_back("prescreen kept " + std::to_string(g) + " exposures and " + std::to_string(pr) +
                               " mediators");
    }
    rep.exposure_names = d.exposure_names;
    rep.mediator_names = d.mediator_names;
    rep.config = config_echo(cfg);
    return d;
}

inline void attach_names(AnalysisReport& rep)
{
    for (auto& r : rep.records) {
        r.gene_id = rep.exposure_names[static_cast<std::size_t>(r.gene)];
        r.mediator_id = rep.mediator_names[static_cast<std::size_t>(r.mediator)];
    }
}

// Steps 2 and 3 shared by SMAHP and SIS+SIS.
inline void screen_and_test(const Dataset& d, const PipelineConfig& cfg, AnalysisReport& rep)
{
    auto t0 = Clock::now();
    auto& sets = rep.active_sets;
    const auto scores = tagged("step 2", [&] { return score_pairs(d, sets, cfg.aft, &rep.warnings); });
    sets = select_top_pairs(scores, sis_threshold(d.n(), cfg.sis_multiplier), sets);
    rep.timings.emplace_back("step2", seconds_since(t0));
    if (sets.s2.empty()) {
        rep.warnings.push_back("no mediators selected");
        rep.timings.emplace_back("step3", 0.0);
        return;
    }
    t0 = Clock::now();
    tagged("step 3", [&] {
        const auto fits = fit_step3_models(d, sets, cfg.aft);
        const auto pm = build_pmax_matrix(fits, sets);
        auto eff = estimate_effects(fits, sets, pm, cfg.fdr_q);
        rep.pairs_tested = eff.records.size();
        rep.records = std::move(eff.records);
        rep.nde = std::move(eff.nde);
        rep.global_nie = std::move(eff.global_nie);
        return 0;
    });
    detail::attach_names(rep);
    rep.timings.emplace_back("step3", seconds_since(t0));
}

/// Univariate AFT slope of log T on each (standardized) column; failed fits give 0.
inline std::vector<double> marginal_aft_coefficients(const Matrix& cols, const Dataset& d, const AftSpec& spec)
{
    std::vector<double> out(static_cast<std::size_t>(cols.cols()), 0.0);
    detail::parallel_for(out.size(), [&](std::size_t j) {
        try {
            const auto f = fit_aft_mle(cols.col(static_cast<Eigen::Index>(j)), d.log_time, d.event, spec);
            if (f.converged) out[j] = f.coefficients[0];
        } catch (const Error&) {
        }
    });
    return out;
}

/// Indices of the `keep` largest |v| (ties by index), returned as a set.
inline std::set<int> top_abs(const std::vector<double>& v, std::size_t keep)
{
    std::vector<int> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return std::abs(v[static_cast<std::size_t>(a)]) > std::abs(v[static_cast<std::size_t>(b)]);
    });
    idx.resize(std::min(keep, idx.size()));
    return {idx.begin(), idx.end()};
}

struct SimpleRegression {
    Matrix slope;  // p x k
    Matrix se;
};

// All simple regressions of mediator columns on exposure columns (each with intercept).
inline SimpleRegression all_simple_regressions(const Matrix& x, const Matrix& m)
{
    const double n = static_cast<double>(x.rows());
    const Matrix xc = x.rowwise() - x.colwise().mean();
    const Matrix mc = m.rowwise() - m.colwise().mean();
    const Vector sxx = xc.colwise().squaredNorm().transpose();
    const Vector smm = mc.colwise().squaredNorm().transpose();
    const Matrix sxm = xc.transpose() * mc;
    SimpleRegression out{Matrix(x.cols(), m.cols()), Matrix(x.cols(), m.cols())};
    for (Eigen::Index s = 0; s < m.cols(); ++s)
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            if (!(sxx[j] > 0.0)) throw Error(ErrorCode::RankDeficientDesign, "exposure column " + std::to_string(j) + " is constant");
            const double b = sxm(j, s) / sxx[j];
            const double rss = std::max(smm[s] - b * sxm(j, s), 0.0);
            out.slope(j, s) = b;
            out.se(j, s) = std::sqrt(rss / (n - 2.0) / sxx[j]);
        }
    return out;
}

} // namespace detail

/// SMAHP: penalized Gehan + penalized mediation models, pair SIS, joint significance.
inline AnalysisReport run_smahp(const Dataset& input, const PipelineConfig& cfg)
{
    AnalysisReport rep;
    rep.method = std::string(to_string(Method::smahp));
    const Dataset d = detail::prepare(input, cfg, rep);
    auto t0 = detail::Clock::now();
    auto& sets = rep.active_sets;

    detail::tagged("step 1", [&] {
        const auto sm = standardize(d.mediators);
        const auto sx = standardize(d.exposures);
        const auto mcols = sm.informative_columns();
        const auto xcols = sx.informative_columns();
        // Gehan outcome fits on M (S1) and on X (T)
        auto gehan_select = [&](const Standardized& st, const IndexVector& cols, std::uint64_t tag) {
            if (cols.empty()) return std::set<int>{};
            GehanProblem prob{detail::select_cols(st.matrix, cols), d.log_time, d.event, 1.0};
            const auto& spec = cfg.step1_outcome_penalty;
            const double lmax = gehan_lambda_max(prob, spec, cfg.gehan);
            const auto path = LambdaPath::log_spaced(lmax > 0.0 ? lmax : 1e-8, cfg.n_lambda, cfg.lambda_min_ratio);
            const auto cv = cv_select_lambda(prob, spec, path, cfg.cv_folds_gehan,
                                             detail::derive_seed({cfg.seed, tag}), cfg.gehan);
            return detail::to_original(cv.fit, cols);
        };
        sets.s1 = gehan_select(sm, mcols, 1);
        sets.t_set = gehan_select(sx, xcols, 2);

        // penalized mediation models M_k ~ X for k in S1
        const std::vector<int> meds(sets.s1.begin(), sets.s1.end());
        std::vector<std::set<int>> j1(meds.size());
        const Matrix xdesign = detail::select_cols(sx.matrix, xcols);
        const auto mspec = cfg.mediation_spec();
        detail::parallel_for(meds.size(), [&](std::size_t m) {
            if (xcols.empty()) return;
            LinearProblem lp{xdesign, d.mediators.col(meds[m]).array() - d.mediators.col(meds[m]).mean()};
            const auto path = LambdaPath::log_spaced(std::max(lm_lambda_max(lp, mspec), 1e-8), cfg.n_lambda,
                                                     cfg.lambda_min_ratio);
            const auto cv = cv_select_lambda_lm(lp, mspec, path, cfg.cv_folds_lm,
                                                detail::derive_seed({cfg.seed, 3, static_cast<std::uint64_t>(meds[m])}));
            j1[m] = detail::to_original(cv.fit, xcols);
        });
        for (std::size_t m = 0; m < meds.size(); ++m) sets.j1[meds[m]] = std::move(j1[m]);
        return 0;
    });
    rep.timings.emplace_back("step1", detail::seconds_since(t0));
    detail::screen_and_test(d, cfg, rep);
    return rep;
}

/// SIS+SIS: marginal top-d screens replace the penalized step, then the same steps 2-3.
inline AnalysisReport run_sis_sis(const Dataset& input, const PipelineConfig& cfg)
{
    AnalysisReport rep;
    rep.method = std::string(to_string(Method::sis_sis));
    const Dataset d = detail::prepare(input, cfg, rep);
    auto t0 = detail::Clock::now();
    auto& sets = rep.active_sets;
    const auto keep = static_cast<std::size_t>(sis_threshold(d.n(), cfg.sis_multiplier));
    detail::tagged("step 1", [&] {
        const auto sm = standardize(d.mediators);
        const auto sx = standardize(d.exposures);
        auto mcoef = detail::marginal_aft_coefficients(sm.matrix, d, cfg.aft);
        auto xcoef = detail::marginal_aft_coefficients(sx.matrix, d, cfg.aft);
        for (std::size_t j = 0; j < sm.zero_variance.size(); ++j)
            if (sm.zero_variance[j]) mcoef[j] = 0.0;
        for (std::size_t j = 0; j < sx.zero_variance.size(); ++j)
            if (sx.zero_variance[j]) xcoef[j] = 0.0;
        sets.s1 = detail::top_abs(mcoef, keep);
        sets.t_set = detail::top_abs(xcoef, keep);
        const std::vector<int> meds(sets.s1.begin(), sets.s1.end());
        const auto reg = detail::all_simple_regressions(sx.matrix, detail::select_cols(d.mediators, IndexVector(meds.begin(), meds.end())));
        for (std::size_t m = 0; m < meds.size(); ++m) {
            std::vector<double> a(reg.slope.col(static_cast<Eigen::Index>(m)).data(),
                                  reg.slope.col(static_cast<Eigen::Index>(m)).data() + reg.slope.rows());
            for (std::size_t j = 0; j < sx.zero_variance.size(); ++j)
                if (sx.zero_variance[j]) a[j] = 0.0;
            sets.j1[meds[m]] = detail::top_abs(a, keep);
        }
        return 0;
    });
    rep.timings.emplace_back("step1", detail::seconds_since(t0));
    detail::screen_and_test(d, cfg, rep);
    return rep;
}

/// Naive: every (j, s) pair tested with marginal models, BH over all p*k pairs.
inline AnalysisReport run_naive(const Dataset& input, const PipelineConfig& cfg)
{
    AnalysisReport rep;
    rep.method = std::string(to_string(Method::naive));
    const Dataset d = detail::prepare(input, cfg, rep);
    if (static_cast<double>(d.p()) * static_cast<double>(d.k()) > 1e6)
        throw Error(ErrorCode::TooManyPairs, "naive method is limited to p*k <= 1e6 pairs");
    auto t0 = detail::Clock::now();
    detail::tagged("naive", [&] {
        const auto reg = detail::all_simple_regressions(d.exposures, d.mediators);
        Vector beta = Vector::Zero(d.k()), beta_se = Vector::Zero(d.k()), pb = Vector::Ones(d.k());
        std::vector<std::string> fail(static_cast<std::size_t>(d.k()));
        detail::parallel_for(static_cast<std::size_t>(d.k()), [&](std::size_t s) {
            const auto si = static_cast<Eigen::Index>(s);
            try {
                const auto f = fit_aft_mle(d.mediators.col(si), d.log_time, d.event, cfg.aft);
                if (!f.converged || !f.std_errors) throw Error(ErrorCode::NoConvergence, "outcome fit failed");
                beta[si] = f.coefficients[0];
                beta_se[si] = (*f.std_errors)[0];
                pb[si] = wald_pvalue(beta[si], beta_se[si]);
            } catch (const Error& e) {
                fail[s] = "naive: mediator " + std::to_string(s) + " outcome fit failed (" + e.what() + "), p_beta = 1";
            }
        });
        for (const auto& f : fail)
            if (!f.empty()) rep.warnings.push_back(f);
        Matrix pa(d.p(), d.k());
        for (Eigen::Index s = 0; s < d.k(); ++s)
            for (Eigen::Index j = 0; j < d.p(); ++j) pa(j, s) = wald_pvalue(reg.slope(j, s), reg.se(j, s));
        std::vector<int> genes(static_cast<std::size_t>(d.p())), meds(static_cast<std::size_t>(d.k()));
        std::iota(genes.begin(), genes.end(), 0);
        std::iota(meds.begin(), meds.end(), 0);
        const auto pm = make_pmax_matrix(genes, meds, pa, pb);
        for (Eigen::Index s = 0; s < d.k(); ++s) {
            auto& sets = rep.active_sets;
            sets.s1.insert(static_cast<int>(s));
            sets.s2.insert(static_cast<int>(s));
            double total = 0.0;
            for (Eigen::Index j = 0; j < d.p(); ++j) {
                sets.j1[static_cast<int>(s)].insert(static_cast<int>(j));
                sets.j2[static_cast<int>(s)].insert(static_cast<int>(j));
                MediationRecord r;
                r.gene = static_cast<int>(j);
                r.mediator = static_cast<int>(s);
                r.alpha_hat = reg.slope(j, s);
                r.alpha_se = reg.se(j, s);
                r.beta_hat = beta[s];
                r.beta_se = beta_se[s];
                r.p_alpha = pm.p_alpha(j, s);
                r.p_beta = pm.p_beta[s];
                r.p_max = pm.p_max(j, s);
                r.p_adj = pm.p_adj(j, s);
                r.nie = r.alpha_hat * r.beta_hat;
                r.significant = r.p_adj <= cfg.fdr_q;
                total += r.nie;
                rep.records.push_back(r);
            }
            rep.global_nie[static_cast<int>(s)] = total;
        }
        for (Eigen::Index j = 0; j < d.p(); ++j) rep.active_sets.t_set.insert(static_cast<int>(j));
        sort_records(rep.records);
        rep.pairs_tested = rep.records.size();
        return 0;
    });
    detail::attach_names(rep);
    rep.timings.emplace_back("total", detail::seconds_since(t0));
    return rep;
}

inline AnalysisReport run_method(Method m, const Dataset& d, const PipelineConfig& cfg)
{
    switch (m) {
    case Method::smahp: return run_smahp(d, cfg);
    case Method::sis_sis: return run_sis_sis(d, cfg);
    case Method::naive: return run_naive(d, cfg);
    }
    throw Error(ErrorCode::InvalidConfig, "unknown method");
}

struct BenchmarkRow {
    std::string scenario;
    int p = 0, k = 0, n = 0;
    double censor_rate = 0.0;
    std::string method;
    double power = 0.0;
    double fdr = 0.0;
    double avg_minutes = 0.0;
    int reps_ok = 0;
    int reps_failed = 0;
};

struct BenchmarkOptions {
    unsigned workers = 0;  // 0 = hardware concurrency
    std::function<void(std::size_t done, std::size_t total)> progress;
};

/**
 * Runs every method on `reps` replicates of every scenario. Replicate r of scenario i uses
 * seed derive_seed(seed, i, r) and the same data for all methods. Failed replicates are
 * excluded from the means and counted.
 */
inline std::vector<BenchmarkRow> run_benchmark(const std::vector<SimScenario>& scenarios,
                                               const std::vector<Method>& methods, int reps, std::uint64_t seed,
                                               const PipelineConfig& base = {}, const BenchmarkOptions& opt = {})
{
    if (reps < 1) throw Error(ErrorCode::OutOfRange, "reps must be >= 1");
    for (const auto& s : scenarios) s.validate();
    struct Cell {
        bool ok = false;
        Score sc;
        double seconds = 0.0;
    };
    const std::size_t ns = scenarios.size(), nm = methods.size(), nr = static_cast<std::size_t>(reps);
    std::vector<Cell> cells(ns * nm * nr);
    std::atomic<std::size_t> done{0};
    const unsigned workers = opt.workers ? opt.workers : std::max(1u, std::thread::hardware_concurrency());
    detail::parallel_for(
        ns * nr,
        [&](std::size_t task) {
            const std::size_t si = task / nr, r = task % nr;
            SimScenario scn = scenarios[si];
            scn.seed = detail::derive_seed({seed, si, r});
            std::optional<Simulated> sim;
            try {
                sim = generate(scn);
            } catch (const Error&) {
            }
            for (std::size_t mi = 0; mi < nm; ++mi) {
                Cell& c = cells[(si * nm + mi) * nr + r];
                if (!sim) continue;
                PipelineConfig cfg = base;
                cfg.seed = scn.seed;
                const auto t0 = detail::Clock::now();
                try {
                    const auto rep = run_method(methods[mi], sim->data, cfg);
                    c.sc = score(rep.significant_pairs(), sim->truth);
                    c.ok = true;
                } catch (const Error&) {
                }
                c.seconds = detail::seconds_since(t0);
            }
            if (opt.progress) opt.progress(++done, ns * nr);
        },
        workers);

    std::vector<BenchmarkRow> rows;
    for (std::size_t si = 0; si < ns; ++si)
        for (std::size_t mi = 0; mi < nm; ++mi) {
            BenchmarkRow row;
            const auto& s = scenarios[si];
            row.scenario = s.name;
            row.p = s.p;
            row.k = s.k;
            row.n = s.n;
            row.censor_rate = s.censor_rate;
            row.method = std::string(to_string(methods[mi]));
            double secs = 0.0;
            for (std::size_t r = 0; r < nr; ++r) {
                const Cell& c = cells[(si * nm + mi) * nr + r];
                if (!c.ok) {
                    ++row.reps_failed;
                    continue;
                }
                ++row.reps_ok;
                row.power += c.sc.power;
                row.fdr += c.sc.fdr;
                secs += c.seconds;
            }
            if (row.reps_ok > 0) {
                row.power /= row.reps_ok;
                row.fdr /= row.reps_ok;
                row.avg_minutes = secs / row.reps_ok / 60.0;
            }
            rows.push_back(row);
        }
    return rows;
}

} // namespace smahp
