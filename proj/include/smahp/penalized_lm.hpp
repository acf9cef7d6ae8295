#pragma once
// Penalized least squares for the per-mediator mediation models:
//   (1/2n) ||y - X a||^2 + penalty(a)
// with MCP (default), elastic-net or lasso, fitted by cyclic coordinate descent
// along a decreasing lambda path with warm starts.

#include <smahp/core.hpp>
#include <smahp/gehan.hpp>

#include <cmath>
#include <vector>

namespace smahp {

struct LinearProblem {
    Matrix design;  // n x p, standardized
    Vector response;

    Eigen::Index n() const { return response.size(); }
    Eigen::Index p() const { return design.cols(); }

    void validate() const
    {
        if (design.rows() != response.size())
            throw Error(ErrorCode::DimensionMismatch, "design rows differ from response length");
        if (!design.allFinite() || !response.allFinite())
            throw Error(ErrorCode::NonFinite, "linear problem has non-finite entries");
    }

    LinearProblem subset(const IndexVector& rows) const
    {
        LinearProblem out;
        const auto m = static_cast<Eigen::Index>(rows.size());
        out.design.resize(m, design.cols());
        out.response.resize(m);
        for (Eigen::Index r = 0; r < m; ++r) {
            out.design.row(r) = design.row(rows[static_cast<std::size_t>(r)]);
            out.response[r] = response[rows[static_cast<std::size_t>(r)]];
        }
        return out;
    }
};

/// MCP: lambda|a| - a^2/(2 tau) for |a| <= tau*lambda, tau*lambda^2/2 beyond.
inline double mcp_penalty(double a, double lambda, double tau)
{
    if (!(tau > 1.0)) throw Error(ErrorCode::InvalidTau, "tau must exceed 1");
    if (!(lambda >= 0.0)) throw Error(ErrorCode::OutOfRange, "lambda must be >= 0");
    const double x = std::abs(a);
    if (x <= tau * lambda) return lambda * x - x * x / (2.0 * tau);
    return 0.5 * tau * lambda * lambda;
}

struct CdOptions {
    double tol = 1e-7;      // max |coefficient change| per sweep
    int max_sweeps = 10000;
};

namespace detail {

/**
 * Univariate minimizer of (v/2) a^2 - z a + pen(a), where v = ||x_j||^2 / n and z is the
 * partial-residual correlation. MCP uses firm thresholding (requires v > 1/tau).
 */
inline double cd_update(double z, double v, double lambda, PenaltyFamily family, double gamma, double tau, double w)
{
    if (family == PenaltyFamily::mcp) {
        const double lam = lambda * w;
        if (std::abs(z) <= v * tau * lam) return soft_threshold(z, lam) / (v - 1.0 / tau);
        return z / v;
    }
    return soft_threshold(z, lambda * gamma * w) / (v + lambda * (1.0 - gamma));
}

inline double lm_objective(const LinearProblem& prob, const Vector& a, double lambda, const PenaltySpec& spec)
{
    const double n = static_cast<double>(prob.n());
    const double loss = (prob.response - prob.design * a).squaredNorm() / (2.0 * n);
    double pen = 0.0;
    if (spec.family == PenaltyFamily::mcp) {
        for (Eigen::Index j = 0; j < a.size(); ++j) pen += mcp_penalty(a[j], lambda * spec.weight(j), spec.tau);
    } else {
        const double g = spec.effective_gamma();
        for (Eigen::Index j = 0; j < a.size(); ++j) pen += g * spec.weight(j) * std::abs(a[j]);
        pen += 0.5 * (1.0 - g) * a.squaredNorm();
        pen *= lambda;
    }
    return loss + pen;
}

inline std::vector<FitResult> fit_lm_path(const LinearProblem& prob, const PenaltySpec& spec, const LambdaPath& path,
                                          const CdOptions& opt)
{
    prob.validate();
    spec.validate(prob.p());
    if (spec.family == PenaltyFamily::sparse_group_lasso)
        throw Error(ErrorCode::InvalidPenalty, "sparse-group lasso is not offered for mediation models");
    const Eigen::Index p = prob.p();
    const double n = static_cast<double>(prob.n());
    Vector v(p);
    for (Eigen::Index j = 0; j < p; ++j) v[j] = prob.design.col(j).squaredNorm() / n;
    if (spec.family == PenaltyFamily::mcp)
        for (Eigen::Index j = 0; j < p; ++j)
            if (v[j] > 0.0 && v[j] <= 1.0 / spec.tau)
                throw Error(ErrorCode::InvalidTau, "tau too small for the column scaling (need ||x||^2/n > 1/tau)");
    const double gamma = spec.effective_gamma();

    std::vector<FitResult> out;
    out.reserve(path.size());
    Vector a = Vector::Zero(p);
    // covariance updates when the Gram matrix is affordable: c_j = x_j'r/n, and a zero
    // coordinate costs O(1) per sweep instead of O(n)
    const bool use_gram = p <= 2000;
    Matrix gram;
    Vector c;
    Vector resid;
    if (use_gram) {
        gram.noalias() = prob.design.transpose() * prob.design / n;
        c.noalias() = prob.design.transpose() * prob.response / n;
    } else {
        resid = prob.response;
    }
    auto sweep_over = [&](const std::vector<Eigen::Index>& cols, double lambda) {
        double max_delta = 0.0;
        for (Eigen::Index j : cols) {
            const double xr = use_gram ? c[j] : prob.design.col(j).dot(resid) / n;
            const double z = xr + v[j] * a[j];
            const double a_new = cd_update(z, v[j], lambda, spec.family, gamma, spec.tau, spec.weight(j));
            const double delta = a_new - a[j];
            if (delta != 0.0) {
                if (use_gram)
                    c.noalias() -= delta * gram.col(j);
                else
                    resid.noalias() -= delta * prob.design.col(j);
                a[j] = a_new;
                max_delta = std::max(max_delta, std::abs(delta));
            }
        }
        return max_delta;
    };
    std::vector<Eigen::Index> all_cols;
    for (Eigen::Index j = 0; j < p; ++j)
        if (v[j] > 0.0) all_cols.push_back(j);
    for (double lambda : path.values) {
        FitResult res;
        res.lambda = lambda;
        bool converged = false;
        int sweep = 0;
        // full sweeps settle the active set; inner sweeps cycle over the nonzero coordinates
        while (sweep < opt.max_sweeps) {
            ++sweep;
            if (sweep_over(all_cols, lambda) < opt.tol) {
                converged = true;
                break;
            }
            std::vector<Eigen::Index> active;
            for (Eigen::Index j : all_cols)
                if (a[j] != 0.0) active.push_back(j);
            while (sweep < opt.max_sweeps) {
                ++sweep;
                if (sweep_over(active, lambda) < opt.tol) break;
            }
        }
        res.coefficients = a;
        res.iterations = sweep;
        res.converged = converged;
        res.objective = lm_objective(prob, a, lambda, spec);
        out.push_back(std::move(res));
    }
    return out;
}

} // namespace detail

/// lambda_max = max_j |x_j' y| / (n * gamma * w_j); gamma is 1 for MCP and lasso.
inline double lm_lambda_max(const LinearProblem& prob, const PenaltySpec& spec)
{
    const double n = static_cast<double>(prob.n());
    const double g = spec.family == PenaltyFamily::mcp ? 1.0 : std::max(spec.effective_gamma(), 1e-3);
    double lmax = 0.0;
    for (Eigen::Index j = 0; j < prob.p(); ++j) {
        const double w = spec.weight(j);
        if (w > 0.0) lmax = std::max(lmax, std::abs(prob.design.col(j).dot(prob.response)) / (n * g * w));
    }
    return lmax;
}

inline LambdaPath lm_default_path(const LinearProblem& prob, const PenaltySpec& spec, int n_lambda = 50,
                                  double min_ratio = 0.01)
{
    double lmax = lm_lambda_max(prob, spec);
    if (!(lmax > 0.0)) lmax = 1e-8;
    return LambdaPath::log_spaced(lmax, n_lambda, min_ratio);
}

/// MCP path; each result is a coordinate-wise stationary point.
inline std::vector<FitResult> fit_mcp(const LinearProblem& prob, const LambdaPath& path, double tau = 3.0,
                                      const CdOptions& opt = {})
{
    PenaltySpec spec;
    spec.family = PenaltyFamily::mcp;
    spec.tau = tau;
    if (!(tau > 1.0)) throw Error(ErrorCode::InvalidTau, "tau must exceed 1");
    return detail::fit_lm_path(prob, spec, path, opt);
}

/// Elastic-net / lasso / ridge path (convex, global optimum).
inline std::vector<FitResult> fit_en_or_lasso(const LinearProblem& prob, const PenaltySpec& spec,
                                              const LambdaPath& path, const CdOptions& opt = {})
{
    if (spec.family != PenaltyFamily::elastic_net && spec.family != PenaltyFamily::lasso &&
        spec.family != PenaltyFamily::ridge)
        throw Error(ErrorCode::InvalidPenalty, "fit_en_or_lasso needs elastic_net, lasso or ridge");
    CdOptions tight = opt;
    tight.tol = std::min(opt.tol, 1e-9);
    return detail::fit_lm_path(prob, spec, path, tight);
}

inline std::vector<FitResult> fit_penalized_lm(const LinearProblem& prob, const PenaltySpec& spec,
                                               const LambdaPath& path, const CdOptions& opt = {})
{
    if (spec.family == PenaltyFamily::mcp) return fit_mcp(prob, path, spec.tau, opt);
    return fit_en_or_lasso(prob, spec, path, opt);
}

/// K-fold CV on mean held-out squared error; ties go to the larger lambda.
inline CvResult cv_select_lambda_lm(const LinearProblem& prob, const PenaltySpec& spec, const LambdaPath& path,
                                    int folds = 10, std::uint64_t seed = 1, const CdOptions& opt = {})
{
    prob.validate();
    if (folds < 2) throw Error(ErrorCode::OutOfRange, "folds must be >= 2");
    if (prob.n() < folds) throw Error(ErrorCode::OutOfRange, "fewer rows than folds");
    CvResult out;
    if (path.size() == 1) {
        out.lambda_opt = path.values[0];
        out.cv_error = {0.0};
        out.fit = fit_penalized_lm(prob, spec, path, opt).front();
        return out;
    }
    const auto fold = detail::assign_folds(Eigen::VectorXi::Ones(prob.n()), folds, seed, false);
    out.cv_error.assign(path.size(), 0.0);
    for (int f = 0; f < folds; ++f) {
        IndexVector train, test;
        for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == f ? test : train).push_back(static_cast<int>(i));
        LinearProblem tr = prob.subset(train);
        const LinearProblem te = prob.subset(test);
        // the mediation design is centered on the full data; recentre the training response
        const double ybar = tr.response.mean();
        const Eigen::RowVectorXd xbar = tr.design.colwise().mean();
        tr.response.array() -= ybar;
        tr.design.rowwise() -= xbar;
        const auto fits = fit_penalized_lm(tr, spec, path, opt);
        for (std::size_t l = 0; l < fits.size(); ++l) {
            const Vector pred =
                ((te.design.rowwise() - xbar) * fits[l].coefficients).array() + ybar;
            out.cv_error[l] += (te.response - pred).squaredNorm();
        }
    }
    for (double& e : out.cv_error) e /= static_cast<double>(prob.n());
    out.index = detail::argmin_prefer_first(out.cv_error);
    out.lambda_opt = path.values[out.index];
    LambdaPath prefix;
    prefix.values.assign(path.values.begin(), path.values.begin() + static_cast<std::ptrdiff_t>(out.index) + 1);
    out.fit = fit_penalized_lm(prob, spec, prefix, opt).back();
    return out;
}

} // namespace smahp
