#pragma once
// Penalized Gehan-type rank estimation for the AFT outcome model.
//
// The loss (1/(n^2 b)) sum_i sum_j delta_i * max(e_j - e_i, 0), e = log t - Phi theta,
// is piecewise linear and convex. It is minimized together with an elastic-net or
// sparse-group-lasso penalty by accelerated proximal gradient on a Huber-smoothed
// version of the hinge, with the smoothing width shrunk in stages (continuation).
// Every loss and gradient evaluation is O(n log n + n d) via one sort of the residuals.

#include <smahp/core.hpp>
#include <smahp/detail/rng.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace smahp {

struct GehanProblem {
    Matrix design;  // n x d, standardized
    Vector log_time;
    Eigen::VectorXi event;
    double scale_b = 1.0;

    Eigen::Index n() const { return log_time.size(); }
    Eigen::Index d() const { return design.cols(); }

    void validate() const
    {
        if (design.cols() < 1) throw Error(ErrorCode::DimensionMismatch, "Gehan design needs at least one column");
        if (design.rows() != log_time.size() || event.size() != log_time.size())
            throw Error(ErrorCode::DimensionMismatch, "Gehan problem rows differ");
        if (event.sum() == 0) throw Error(ErrorCode::AllCensored, "Gehan problem has no events");
        if (!(scale_b > 0.0)) throw Error(ErrorCode::OutOfRange, "scale b must be positive");
    }

    GehanProblem subset(const IndexVector& rows) const
    {
        GehanProblem out;
        const auto m = static_cast<Eigen::Index>(rows.size());
        out.design.resize(m, design.cols());
        out.log_time.resize(m);
        out.event.resize(m);
        for (Eigen::Index r = 0; r < m; ++r) {
            const auto i = rows[static_cast<std::size_t>(r)];
            out.design.row(r) = design.row(i);
            out.log_time[r] = log_time[i];
            out.event[r] = event[i];
        }
        out.scale_b = scale_b;
        return out;
    }
};

/// Strictly decreasing regularization path.
struct LambdaPath {
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    double max() const { return values.front(); }

    /// n_lambda log-spaced values from lambda_max down to lambda_max * min_ratio.
    static LambdaPath log_spaced(double lambda_max, int n_lambda = 50, double min_ratio = 0.01)
    {
        if (!(lambda_max > 0.0) || !std::isfinite(lambda_max))
            throw Error(ErrorCode::OutOfRange, "lambda_max must be positive and finite");
        if (n_lambda < 1) throw Error(ErrorCode::OutOfRange, "n_lambda must be >= 1");
        if (!(min_ratio > 0.0 && min_ratio < 1.0)) throw Error(ErrorCode::OutOfRange, "min_ratio must lie in (0,1)");
        LambdaPath p;
        if (n_lambda == 1) {
            p.values.push_back(lambda_max);
            return p;
        }
        const double step = std::log(min_ratio) / (n_lambda - 1);
        for (int i = 0; i < n_lambda; ++i) p.values.push_back(lambda_max * std::exp(step * i));
        p.values.back() = lambda_max * min_ratio;
        return p;
    }

    static LambdaPath single(double lambda) { return LambdaPath{{lambda}}; }
};

namespace detail {

/// Sort-based evaluator of the (optionally smoothed) Gehan loss and its gradient in e.
class GehanEvaluator {
public:
    explicit GehanEvaluator(const Eigen::VectorXi& event)
        : event_(event)
        , order_(static_cast<std::size_t>(event.size()))
        , sorted_(static_cast<std::size_t>(event.size()))
        , cum_e_(static_cast<std::size_t>(event.size()) + 1)
        , cum_e2_(static_cast<std::size_t>(event.size()) + 1)
        , cum_ev_(static_cast<std::size_t>(event.size()) + 1)
        , cum_ev_e_(static_cast<std::size_t>(event.size()) + 1)
    {}

    /**
     * Returns sum_i delta_i sum_j h(e_j - e_i) (unnormalized), where h is the hinge
     * max(x, 0) when mu == 0 and its Huber smoothing otherwise. When grad_e is given it
     * receives the derivative of that sum with respect to each e_k.
     */
    double evaluate(const Vector& e, double mu, Vector* grad_e)
    {
        const std::size_t n = order_.size();
        std::iota(order_.begin(), order_.end(), 0);
        std::sort(order_.begin(), order_.end(), [&](int a, int b) { return e[a] < e[b]; });
        cum_e_[0] = cum_e2_[0] = cum_ev_[0] = cum_ev_e_[0] = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const int i = order_[r];
            const double v = e[i];
            sorted_[r] = v;
            cum_e_[r + 1] = cum_e_[r] + v;
            cum_e2_[r + 1] = cum_e2_[r] + v * v;
            cum_ev_[r + 1] = cum_ev_[r] + event_[i];
            cum_ev_e_[r + 1] = cum_ev_e_[r] + (event_[i] ? v : 0.0);
        }
        auto first_greater = [&](double x) {
            return static_cast<std::size_t>(std::upper_bound(sorted_.begin(), sorted_.end(), x) - sorted_.begin());
        };
        auto first_not_less = [&](double x) {
            return static_cast<std::size_t>(std::lower_bound(sorted_.begin(), sorted_.end(), x) - sorted_.begin());
        };

        double value = 0.0;
        if (grad_e) grad_e->setZero(static_cast<Eigen::Index>(n));
        for (std::size_t r = 0; r < n; ++r) {
            const int k = order_[r];
            const double s = sorted_[r];
            // pairs (k, j) with k as the event index: sum_j h(e_j - e_k)
            const std::size_t hi = first_greater(s);  // strictly greater than s
            double b_k = 0.0;                         // sum_j h'(e_j - s)
            if (mu <= 0.0) {
                const double cnt = static_cast<double>(n - hi);
                if (event_[k]) value += (cum_e_[n] - cum_e_[hi]) - cnt * s;
                b_k = cnt;
            } else {
                const std::size_t lin = first_not_less(s + mu);
                const double cq = static_cast<double>(lin - hi);
                const double sq = cum_e_[lin] - cum_e_[hi];
                const double sq2 = cum_e2_[lin] - cum_e2_[hi];
                const double cl = static_cast<double>(n - lin);
                const double sl = cum_e_[n] - cum_e_[lin];
                if (event_[k]) value += (sq2 - 2.0 * s * sq + cq * s * s) / (2.0 * mu) + (sl - cl * s - 0.5 * mu * cl);
                b_k = (sq - cq * s) / mu + cl;
            }
            if (!grad_e) continue;
            // pairs (i, k) with i an event and e_i < e_k: sum_i h'(e_k - e_i)
            double a_k = 0.0;
            if (mu <= 0.0) {
                const std::size_t lo = first_not_less(s);  // events strictly below s
                a_k = cum_ev_[lo];
            } else {
                const std::size_t full = first_greater(s - mu);  // e_i <= s - mu
                const std::size_t lo = first_not_less(s);        // e_i < s
                const double cnt_part = cum_ev_[lo] - cum_ev_[full];
                const double sum_part = cum_ev_e_[lo] - cum_ev_e_[full];
                a_k = cum_ev_[full] + (cnt_part * s - sum_part) / mu;
            }
            (*grad_e)[k] = a_k - (event_[k] ? b_k : 0.0);
        }
        return value;
    }

private:
    Eigen::VectorXi event_;
    std::vector<int> order_;
    std::vector<double> sorted_;
    std::vector<double> cum_e_, cum_e2_, cum_ev_, cum_ev_e_;
};

inline double soft_threshold(double x, double t)
{
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

inline double sample_sd(const Vector& v)
{
    if (v.size() < 2) return 0.0;
    return std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1));
}

} // namespace detail

/// Exact Gehan loss (1/n^2) sum_i sum_j (delta_i / b) [log t_i - log t_j - (Phi_i - Phi_j)' theta]^-.
inline double gehan_loss(const Vector& theta, const GehanProblem& prob)
{
    if (theta.size() != prob.d()) throw Error(ErrorCode::DimensionMismatch, "theta length differs from design columns");
    const Vector e = prob.log_time - prob.design * theta;
    detail::GehanEvaluator ev(prob.event);
    const double n = static_cast<double>(prob.n());
    return ev.evaluate(e, 0.0, nullptr) / (n * n * prob.scale_b);
}

/// Penalty g(theta): elastic-net or sparse-group lasso, with lasso/ridge as gamma corners.
/// MCP is evaluated by `mcp_penalty` in penalized_lm.hpp, not here.
inline double penalty_value(const Vector& theta, const PenaltySpec& spec)
{
    spec.validate(theta.size());
    const double g = spec.effective_gamma();
    double l1 = 0.0;
    for (Eigen::Index j = 0; j < theta.size(); ++j) l1 += spec.weight(j) * std::abs(theta[j]);
    switch (spec.family) {
    case PenaltyFamily::sparse_group_lasso: {
        double grp = 0.0;
        const auto groups = spec.effective_groups(theta.size());
        for (std::size_t l = 0; l < groups.size(); ++l) {
            double ss = 0.0;
            for (int j : groups[l]) ss += theta[j] * theta[j];
            grp += spec.group_weight(l, groups[l].size()) * std::sqrt(ss);
        }
        return g * l1 + (1.0 - g) * grp;
    }
    case PenaltyFamily::elastic_net:
    case PenaltyFamily::lasso:
    case PenaltyFamily::ridge:
        return g * l1 + 0.5 * (1.0 - g) * theta.squaredNorm();
    case PenaltyFamily::mcp:
        break;
    }
    throw Error(ErrorCode::InvalidPenalty, "penalty_value does not cover mcp");
}

struct GehanSolverOptions {
    double tol = 1e-10;     // relative objective change, three consecutive iterations
    int max_iter = 5000;    // per lambda, summed over smoothing stages
    /// Smoothing widths relative to sd(log t), applied in order.
    std::vector<double> smoothing = {1e-1, 1e-2, 1e-3, 1e-4, 1e-5};
    /// When set, receives the smoothed penalized objective after every iteration,
    /// one vector per smoothing stage (last fit of a path only).
    std::vector<std::vector<double>>* trace = nullptr;
};

namespace detail {

class GehanSolver {
public:
    GehanSolver(const GehanProblem& prob, const PenaltySpec& spec, const GehanSolverOptions& opt)
        : prob_(prob)
        , spec_(spec)
        , opt_(opt)
        , eval_(prob.event)
        , gamma_(spec.effective_gamma())
        , groups_(spec.effective_groups(prob.d()))
    {
        prob.validate();
        spec.validate(prob.d());
        if (spec.family == PenaltyFamily::mcp)
            throw Error(ErrorCode::InvalidPenalty, "the Gehan solver supports convex penalties only");
        const double n = static_cast<double>(prob.n());
        norm_ = 1.0 / (n * n * prob.scale_b);
        sd_ = std::max(sample_sd(prob.log_time), 1e-8);
        // spectral bound of the smoothed Hessian times mu, used to seed backtracking
        const Matrix centered = prob.design.rowwise() - prob.design.colwise().mean();
        const double fro2 = centered.squaredNorm();
        lipschitz_seed_ = std::max(2.0 * fro2 * norm_ * n, 1e-12);
    }

    /// Smoothed loss and gradient w.r.t. theta.
    double loss(const Vector& theta, double mu, Vector* grad)
    {
        e_ = prob_.log_time - prob_.design * theta;
        if (!grad) return eval_.evaluate(e_, mu, nullptr) * norm_;
        const double v = eval_.evaluate(e_, mu, &ge_) * norm_;
        *grad = -(prob_.design.transpose() * ge_) * norm_;
        return v;
    }

    Vector gradient_at_zero(double mu)
    {
        Vector g;
        loss(Vector::Zero(prob_.d()), mu, &g);
        return g;
    }

    double penalty(const Vector& theta) const { return penalty_value(theta, spec_); }

    Vector prox(const Vector& v, double step, double lambda) const
    {
        Vector out(v.size());
        const double l1 = step * lambda * gamma_;
        for (Eigen::Index j = 0; j < v.size(); ++j) out[j] = soft_threshold(v[j], l1 * spec_.weight(j));
        if (spec_.family == PenaltyFamily::sparse_group_lasso) {
            const double l2 = step * lambda * (1.0 - gamma_);
            for (std::size_t l = 0; l < groups_.size(); ++l) {
                double ss = 0.0;
                for (int j : groups_[l]) ss += out[j] * out[j];
                const double nrm = std::sqrt(ss);
                const double t = l2 * spec_.group_weight(l, groups_[l].size());
                const double f = nrm > t ? 1.0 - t / nrm : 0.0;
                for (int j : groups_[l]) out[j] *= f;
            }
        } else {
            out /= 1.0 + step * lambda * (1.0 - gamma_);
        }
        return out;
    }

    /// Runs all smoothing stages from `theta` at the given lambda.
    FitResult solve(Vector theta, double lambda, bool record)
    {
        FitResult res;
        res.lambda = lambda;
        int total_iter = 0;
        bool converged = true;
        if (record && opt_.trace) opt_.trace->clear();
        for (std::size_t st = 0; st < opt_.smoothing.size(); ++st) {
            const double mu = opt_.smoothing[st] * sd_;
            std::vector<double>* stage_trace = nullptr;
            if (record && opt_.trace) {
                opt_.trace->emplace_back();
                stage_trace = &opt_.trace->back();
            }
            const int budget = std::max(1, opt_.max_iter - total_iter);
            int used = 0;
            const bool ok = stage(theta, lambda, mu, st, budget, used, stage_trace);
            total_iter += used;
            if (!ok) converged = false;
        }
        res.coefficients = theta;
        res.iterations = total_iter;
        res.converged = converged;
        res.objective = loss(theta, 0.0, nullptr) + lambda * penalty(theta);
        res.scale = prob_.scale_b;
        return res;
    }

private:
    // Accelerated proximal gradient with backtracking and objective-based restart.
    // The accepted iterate sequence has non-increasing smoothed objective.
    bool stage(Vector& x, double lambda, double mu, std::size_t stage_id, int budget, int& used,
               std::vector<double>* trace)
    {
        if (lipschitz_.size() <= stage_id) lipschitz_.resize(stage_id + 1, 0.0);
        double& L = lipschitz_[stage_id];
        if (!(L > 0.0)) L = std::max(lipschitz_seed_ / mu * 1e-3, 1e-12);

        Vector grad_y;
        double Fx = loss(x, mu, &grad_y) + lambda * penalty(x);
        if (trace) trace->push_back(Fx);
        Vector y = x;
        double fy = Fx - lambda * penalty(x);
        double t = 1.0;
        int small_steps = 0;
        for (used = 0; used < budget;) {
            ++used;
            Vector x_new;
            double f_new = 0.0;
            for (int bt = 0; bt < 80; ++bt) {
                x_new = prox(y - grad_y / L, 1.0 / L, lambda);
                f_new = loss(x_new, mu, nullptr);
                const Vector diff = x_new - y;
                if (f_new <= fy + grad_y.dot(diff) + 0.5 * L * diff.squaredNorm() + 1e-15 * std::abs(fy)) break;
                L *= 2.0;
            }
            const double F_new = f_new + lambda * penalty(x_new);
            if (F_new > Fx) {
                if (t > 1.0) {
                    // momentum overshoot: restart from x with a plain proximal step
                    t = 1.0;
                    y = x;
                    fy = loss(y, mu, &grad_y);
                    continue;
                }
                if (trace) trace->push_back(Fx);
                return true;  // no further descent at this precision
            }
            const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            y = x_new + ((t - 1.0) / t_new) * (x_new - x);
            const double rel = (Fx - F_new) / std::max(1.0, std::abs(F_new));
            x = std::move(x_new);
            Fx = F_new;
            t = t_new;
            if (trace) trace->push_back(Fx);
            if (rel < opt_.tol) {
                if (++small_steps >= 3) return true;
            } else {
                small_steps = 0;
            }
            fy = loss(y, mu, &grad_y);
            L *= 0.9;
        }
        return false;
    }

    const GehanProblem& prob_;
    const PenaltySpec& spec_;
    GehanSolverOptions opt_;
    GehanEvaluator eval_;
    double gamma_;
    std::vector<IndexVector> groups_;
    double norm_ = 1.0;
    double sd_ = 1.0;
    double lipschitz_seed_ = 1.0;
    std::vector<double> lipschitz_;
    Vector e_, ge_;
};

} // namespace detail

/**
 * Smallest lambda whose penalized Gehan solution is exactly zero, from the subgradient
 * at theta = 0 (taken over the exact loss and every smoothing stage). Ridge never yields
 * exact zeros; its path is anchored as for gamma = 1e-3.
 */
inline double gehan_lambda_max(const GehanProblem& prob, const PenaltySpec& spec,
                               const GehanSolverOptions& opt = {})
{
    detail::GehanSolver solver(prob, spec, opt);
    const double sd = std::max(detail::sample_sd(prob.log_time), 1e-8);
    std::vector<Vector> grads{solver.gradient_at_zero(0.0)};
    for (double m : opt.smoothing) grads.push_back(solver.gradient_at_zero(m * sd));
    const double gamma = std::max(spec.effective_gamma(), 1e-3);
    double lmax = 0.0;
    if (spec.family == PenaltyFamily::sparse_group_lasso && spec.effective_gamma() < 1.0) {
        const auto groups = spec.effective_groups(prob.d());
        for (const auto& g : grads) {
            for (std::size_t l = 0; l < groups.size(); ++l) {
                const double vl = spec.group_weight(l, groups[l].size());
                auto excess = [&](double lam) {
                    double ss = 0.0;
                    for (int j : groups[l]) {
                        const double s = detail::soft_threshold(g[j], lam * gamma * spec.weight(j));
                        ss += s * s;
                    }
                    return std::sqrt(ss) - lam * (1.0 - spec.effective_gamma()) * vl;
                };
                double hi = 1.0;
                if (excess(0.0) <= 0.0) continue;
                while (excess(hi) > 0.0 && hi < 1e300) hi *= 2.0;
                double lo = 0.0;
                for (int it = 0; it < 200; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    (excess(mid) > 0.0 ? lo : hi) = mid;
                }
                lmax = std::max(lmax, hi);
            }
        }
    } else {
        for (const auto& g : grads)
            for (Eigen::Index j = 0; j < g.size(); ++j) {
                const double w = spec.weight(j);
                if (w > 0.0) lmax = std::max(lmax, std::abs(g[j]) / (gamma * w));
            }
    }
    // nudge so that lambda_max itself lands inside the zero region despite rounding
    return lmax * (1.0 + 1e-10);
}

/// Default 50-point path for a Gehan problem.
inline LambdaPath gehan_default_path(const GehanProblem& prob, const PenaltySpec& spec, int n_lambda = 50,
                                     double min_ratio = 0.01)
{
    double lmax = gehan_lambda_max(prob, spec);
    if (!(lmax > 0.0)) lmax = 1e-8;
    return LambdaPath::log_spaced(lmax, n_lambda, min_ratio);
}

/// Fits the penalized Gehan estimator along a decreasing path with warm starts.
inline std::vector<FitResult> fit_penalized_gehan(const GehanProblem& prob, const PenaltySpec& spec,
                                                  const LambdaPath& path, const GehanSolverOptions& opt = {})
{
    detail::GehanSolver solver(prob, spec, opt);
    std::vector<FitResult> out;
    out.reserve(path.size());
    Vector theta = Vector::Zero(prob.d());
    for (std::size_t i = 0; i < path.size(); ++i) {
        FitResult r = solver.solve(theta, path.values[i], i + 1 == path.size());
        theta = r.coefficients;
        out.push_back(std::move(r));
    }
    return out;
}

namespace detail {

/// Shuffled, round-robin fold labels. Re-draws once if a training split lacks events.
inline std::vector<int> assign_folds(const Eigen::VectorXi& event, int folds, std::uint64_t seed, bool require_events)
{
    const auto n = static_cast<std::size_t>(event.size());
    for (int attempt = 0; attempt < 2; ++attempt) {
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        Rng rng(derive_seed({seed, static_cast<std::uint64_t>(attempt)}));
        std::shuffle(idx.begin(), idx.end(), rng);
        std::vector<int> fold(n);
        for (std::size_t r = 0; r < n; ++r) fold[static_cast<std::size_t>(idx[r])] = static_cast<int>(r % folds);
        if (!require_events) return fold;
        bool ok = true;
        for (int f = 0; f < folds && ok; ++f) {
            int ev = 0;
            for (std::size_t i = 0; i < n; ++i)
                if (fold[i] != f) ev += event[static_cast<Eigen::Index>(i)];
            ok = ev > 0;
        }
        if (ok) return fold;
    }
    throw Error(ErrorCode::AllCensoredFold, "a cross-validation training split has no events");
}

/// Index of the minimum, preferring the earliest (largest lambda) among ties.
inline std::size_t argmin_prefer_first(const std::vector<double>& v)
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] < v[best] - 1e-12 * std::max(1.0, std::abs(v[best]))) best = i;
    return best;
}

} // namespace detail

struct CvResult {
    double lambda_opt = 0.0;
    std::size_t index = 0;
    std::vector<double> cv_error;
    FitResult fit;
};

/**
 * K-fold cross-validation over the path; the held-out criterion is the Gehan loss
 * over pairs inside the held-out fold. The final fit is refit on all rows.
 */
inline CvResult cv_select_lambda(const GehanProblem& prob, const PenaltySpec& spec, const LambdaPath& path,
                                 int folds = 5, std::uint64_t seed = 1, const GehanSolverOptions& opt = {})
{
    prob.validate();
    if (folds < 2) throw Error(ErrorCode::OutOfRange, "folds must be >= 2");
    if (prob.n() < folds) throw Error(ErrorCode::OutOfRange, "fewer rows than folds");
    CvResult out;
    if (path.size() == 1) {
        out.lambda_opt = path.values[0];
        out.cv_error = {0.0};
        out.fit = fit_penalized_gehan(prob, spec, path, opt).front();
        return out;
    }
    const auto fold = detail::assign_folds(prob.event, folds, seed, true);
    out.cv_error.assign(path.size(), 0.0);
    for (int f = 0; f < folds; ++f) {
        IndexVector train, test;
        for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == f ? test : train).push_back(static_cast<int>(i));
        const GehanProblem tr = prob.subset(train);
        const GehanProblem te = prob.subset(test);
        const auto fits = fit_penalized_gehan(tr, spec, path, opt);
        const bool test_has_events = te.event.sum() > 0;
        for (std::size_t l = 0; l < fits.size(); ++l)
            out.cv_error[l] += test_has_events ? gehan_loss(fits[l].coefficients, te) / folds : 0.0;
    }
    out.index = detail::argmin_prefer_first(out.cv_error);
    out.lambda_opt = path.values[out.index];
    LambdaPath prefix;
    prefix.values.assign(path.values.begin(), path.values.begin() + static_cast<std::ptrdiff_t>(out.index) + 1);
    out.fit = fit_penalized_gehan(prob, spec, prefix, opt).back();
    return out;
}

} // namespace smahp
