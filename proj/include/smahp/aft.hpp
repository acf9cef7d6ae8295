#pragma once
// Parametric AFT maximum likelihood (log-normal / log-Weibull errors), ordinary least
// squares with classical standard errors, Wald p-values and the univariate pre-screen.

#include <smahp/core.hpp>
#include <smahp/detail/parallel.hpp>
#include <smahp/detail/stats.hpp>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace smahp {

enum class AftFamily { log_normal, log_weibull };

inline constexpr std::string_view to_string(AftFamily f)
{
    return f == AftFamily::log_normal ? "lognormal" : "weibull";
}

inline std::optional<AftFamily> parse_aft_family(std::string_view s)
{
    if (s == "lognormal" || s == "log_normal") return AftFamily::log_normal;
    if (s == "weibull" || s == "log_weibull") return AftFamily::log_weibull;
    return std::nullopt;
}

struct AftSpec {
    AftFamily family = AftFamily::log_normal;
    bool include_intercept = true;
};

namespace detail {

struct AftTerm {
    double u, du, d2u;  // log-contribution and its first two derivatives in z
};

inline AftTerm aft_term(double z, bool event, AftFamily family)
{
    if (family == AftFamily::log_normal) {
        if (event) return {norm_logpdf(z), -z, -1.0};
        const double h = norm_hazard(z);
        return {norm_logsf(z), -h, -h * (h - z)};
    }
    const double ez = std::exp(std::min(z, 700.0));
    if (event) return {z - ez, 1.0 - ez, -ez};
    return {-ez, -ez, -ez};
}

} // namespace detail

/**
 * Censored AFT log-likelihood sum_i [delta_i (log f(z_i) - log b) + (1 - delta_i) log S(z_i)],
 * z_i = (log t_i - x_i' beta) / b, b = exp(log_scale). `design` is used as given (add an
 * intercept column yourself if wanted).
 */
inline double aft_loglik(const Vector& beta, double log_scale, const Matrix& design, const Vector& log_time,
                         const Eigen::VectorXi& event, const AftSpec& spec, Vector* gradient = nullptr,
                         Matrix* hessian = nullptr)
{
    if (beta.size() != design.cols() || design.rows() != log_time.size() || event.size() != log_time.size())
        throw Error(ErrorCode::DimensionMismatch, "AFT likelihood dimensions are inconsistent");
    const Eigen::Index n = log_time.size(), p = design.cols();
    const double sigma = std::exp(log_scale);
    const Vector z = (log_time - design * beta) / sigma;
    double ll = 0.0;
    Vector w1(n), w2(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto t = detail::aft_term(z[i], event[i] != 0, spec.family);
        ll += t.u - (event[i] ? log_scale : 0.0);
        w1[i] = t.du;
        w2[i] = t.d2u;
    }
    if (gradient) {
        gradient->resize(p + 1);
        gradient->head(p) = -(design.transpose() * w1) / sigma;
        (*gradient)[p] = -(w1.dot(z)) - static_cast<double>(event.sum());
    }
    if (hessian) {
        hessian->resize(p + 1, p + 1);
        hessian->topLeftCorner(p, p) = design.transpose() * w2.asDiagonal() * design / (sigma * sigma);
        const Vector cross = design.transpose() * (w2.cwiseProduct(z) + w1) / sigma;
        hessian->col(p).head(p) = cross;
        hessian->row(p).head(p) = cross.transpose();
        (*hessian)(p, p) = (w2.array() * z.array().square() + w1.array() * z.array()).sum();
    }
    return ll;
}

struct AftOptions {
    double grad_tol = 1e-6;
    int max_iter = 200;
    bool check_events = true;  // events >= columns + 2
};

namespace detail {

inline Matrix with_intercept(const Matrix& design)
{
    Matrix out(design.rows(), design.cols() + 1);
    out.col(0).setOnes();
    out.rightCols(design.cols()) = design;
    return out;
}

inline void require_full_rank(const Matrix& x, const char* what)
{
    if (x.cols() == 0) return;
    if (x.rows() < x.cols())
        throw Error(ErrorCode::RankDeficientDesign, std::string(what) + " has more columns than rows");
    Eigen::ColPivHouseholderQR<Matrix> qr(x);
    qr.setThreshold(1e-10);
    if (qr.rank() < x.cols()) {
        std::string cols;
        const auto perm = qr.colsPermutation().indices();
        for (Eigen::Index r = qr.rank(); r < x.cols(); ++r) cols += (cols.empty() ? "" : ",") + std::to_string(perm[r]);
        throw Error(ErrorCode::RankDeficientDesign, std::string(what) + " is rank deficient; dependent column(s) " + cols);
    }
}

} // namespace detail

/**
 * AFT maximum likelihood by Newton ascent with step halving (gradient ascent when the
 * Hessian is not negative definite). Standard errors come from the inverse observed
 * information; they are absent when the information is singular.
 */
inline FitResult fit_aft_mle(const Matrix& design, const Vector& log_time, const Eigen::VectorXi& event,
                             const AftSpec& spec = {}, const AftOptions& opt = {})
{
    if (design.rows() != log_time.size() || event.size() != log_time.size())
        throw Error(ErrorCode::DimensionMismatch, "AFT design rows differ from outcome length");
    const Eigen::Index events = event.sum();
    if (events == 0) throw Error(ErrorCode::AllCensored, "AFT fit has no events");
    if (opt.check_events && events < design.cols() + 2)
        throw Error(ErrorCode::InsufficientEvents, std::to_string(events) + " events for " +
                                                       std::to_string(design.cols()) + " columns");
    const Matrix x = spec.include_intercept ? detail::with_intercept(design) : design;
    detail::require_full_rank(x, "AFT design");
    const Eigen::Index p = x.cols();

    // start from least squares on log-times
    Vector beta = Vector::Zero(p);
    if (p > 0) beta = x.colPivHouseholderQr().solve(log_time);
    const Vector resid = log_time - x * beta;
    double log_scale = std::log(std::max(std::sqrt(resid.squaredNorm() / std::max<Eigen::Index>(1, x.rows())), 1e-3));

    Vector theta(p + 1);
    theta << beta, log_scale;
    Vector grad;
    Matrix hess;
    auto eval = [&](const Vector& th, Vector* g, Matrix* h) {
        return aft_loglik(th.head(p), th[p], x, log_time, event, spec, g, h);
    };
    double ll = eval(theta, &grad, &hess);
    bool converged = false;
    int it = 0;
    for (; it < opt.max_iter; ++it) {
        if (grad.lpNorm<Eigen::Infinity>() < opt.grad_tol) {
            converged = true;
            break;
        }
        // the likelihood is not concave in (beta, log b); damp -H until it factorizes
        Vector dir;
        Matrix neg = -hess;
        const double base = std::max(1e-8, neg.diagonal().cwiseAbs().maxCoeff());
        for (double mu = 0.0; mu < 1e12 * base; mu = mu == 0.0 ? 1e-6 * base : mu * 10.0) {
            Eigen::LLT<Matrix> llt(neg + mu * Matrix::Identity(p + 1, p + 1));
            if (llt.info() == Eigen::Success) {
                dir = llt.solve(grad);
                break;
            }
        }
        if (dir.size() == 0) dir = grad / std::max(1.0, grad.norm());
        double step = 1.0;
        bool improved = false;
        for (int h = 0; h < 60; ++h) {
            const Vector cand = theta + step * dir;
            const double ll_c = eval(cand, nullptr, nullptr);
            if (std::isfinite(ll_c) && ll_c >= ll - 1e-12 * std::abs(ll)) {
                theta = cand;
                ll = ll_c;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        ll = eval(theta, &grad, &hess);
        if (!improved) break;
    }
    if (!converged && grad.lpNorm<Eigen::Infinity>() < opt.grad_tol) converged = true;

    FitResult res;
    res.iterations = it;
    res.converged = converged;
    res.objective = ll;
    res.scale = std::exp(theta[p]);
    const Eigen::Index off = spec.include_intercept ? 1 : 0;
    res.intercept = spec.include_intercept ? theta[0] : 0.0;
    res.coefficients = theta.segment(off, p - off);
    res.columns.resize(static_cast<std::size_t>(p - off));
    std::iota(res.columns.begin(), res.columns.end(), 0);

    Eigen::LDLT<Matrix> info(-hess);
    if (info.info() == Eigen::Success && info.isPositive()) {
        const Matrix cov = info.solve(Matrix::Identity(p + 1, p + 1));
        const Vector var = cov.diagonal();
        if ((var.array() > 0.0).all() && var.allFinite()) {
            res.std_errors = var.segment(off, p - off).cwiseSqrt();
            if (spec.include_intercept) res.intercept_se = std::sqrt(var[0]);
        }
    }
    return res;
}

/// OLS with intercept and classical (sigma^2 (X'X)^-1) standard errors.
inline FitResult fit_ols(const Matrix& design, const Vector& y, bool include_intercept = true)
{
    if (design.rows() != y.size()) throw Error(ErrorCode::DimensionMismatch, "OLS design rows differ from response");
    const Matrix x = include_intercept ? detail::with_intercept(design) : design;
    detail::require_full_rank(x, "OLS design");
    const Eigen::Index n = x.rows(), p = x.cols();
    if (n <= p) throw Error(ErrorCode::RankDeficientDesign, "OLS needs more rows than columns");
    Eigen::ColPivHouseholderQR<Matrix> qr(x);
    const Vector beta = qr.solve(y);
    const double rss = (y - x * beta).squaredNorm();
    const double sigma2 = rss / static_cast<double>(n - p);
    const Matrix xtx_inv = (x.transpose() * x).ldlt().solve(Matrix::Identity(p, p));
    const Vector se = (sigma2 * xtx_inv.diagonal()).cwiseMax(0.0).cwiseSqrt();

    FitResult res;
    const Eigen::Index off = include_intercept ? 1 : 0;
    res.intercept = include_intercept ? beta[0] : 0.0;
    if (include_intercept) res.intercept_se = se[0];
    res.coefficients = beta.segment(off, p - off);
    res.std_errors = se.segment(off, p - off);
    res.columns.resize(static_cast<std::size_t>(p - off));
    std::iota(res.columns.begin(), res.columns.end(), 0);
    res.scale = std::sqrt(sigma2);
    res.objective = rss;
    res.converged = true;
    return res;
}

/// Two-sided normal-theory p-value 2 (1 - Phi(|coef| / se)), floored at the smallest
/// positive double so it stays in (0, 1].
inline double wald_pvalue(double coef, double se)
{
    if (!(se > 0.0)) throw Error(ErrorCode::NonPositiveSE, "standard error must be positive");
    const double p = std::erfc(std::abs(coef) / se / std::numbers::sqrt2);
    return std::clamp(p, std::numeric_limits<double>::min(), 1.0);
}

/// p-value of coefficient j of a fit; throws SingularInformation when SEs are absent.
inline double coefficient_pvalue(const FitResult& fit, Eigen::Index j)
{
    if (!fit.std_errors) throw Error(ErrorCode::SingularInformation, "standard errors unavailable");
    return wald_pvalue(fit.coefficients[j], (*fit.std_errors)[j]);
}

struct PrescreenResult {
    Dataset data;
    IndexVector kept_exposures;   // original column indices, in original order
    IndexVector kept_mediators;
    std::vector<double> exposure_pvalues;
    std::vector<double> mediator_pvalues;
};

namespace detail {

/// Univariate AFT p-value per column; failed fits get +inf so they rank last.
inline std::vector<double> univariate_aft_pvalues(const Matrix& features, const Dataset& d, const AftSpec& spec)
{
    std::vector<double> out(static_cast<std::size_t>(features.cols()), std::numeric_limits<double>::infinity());
    parallel_for(static_cast<std::size_t>(features.cols()), [&](std::size_t j) {
        try {
            const auto fit = fit_aft_mle(features.col(static_cast<Eigen::Index>(j)), d.log_time, d.event, spec);
            if (fit.converged && fit.std_errors) out[j] = coefficient_pvalue(fit, 0);
        } catch (const Error&) {
        }
    });
    return out;
}

inline IndexVector smallest_in_order(const std::vector<double>& p, std::size_t keep)
{
    IndexVector idx(p.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return p[static_cast<std::size_t>(a)] < p[static_cast<std::size_t>(b)]; });
    idx.resize(keep);
    std::sort(idx.begin(), idx.end());
    return idx;
}

inline Matrix take_columns(const Matrix& m, const IndexVector& cols)
{
    Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = m.col(cols[c]);
    return out;
}

inline std::vector<std::string> take_names(const std::vector<std::string>& names, const IndexVector& cols)
{
    std::vector<std::string> out;
    for (int c : cols) out.push_back(names[static_cast<std::size_t>(c)]);
    return out;
}

} // namespace detail

/**
 * Univariate AFT pre-screen: keeps the n_genes exposures and n_proteins mediators with
 * the smallest Wald p-values (ties by column order). Retained columns keep their order.
 */
inline PrescreenResult univariate_prescreen(const Dataset& d, Eigen::Index n_genes, Eigen::Index n_proteins,
                                            const AftSpec& spec = {})
{
    if (n_genes < 0 || n_genes > d.p() || n_proteins < 0 || n_proteins > d.k())
        throw Error(ErrorCode::OutOfRange, "prescreen sizes exceed available columns");
    PrescreenResult out;
    out.exposure_pvalues = detail::univariate_aft_pvalues(d.exposures, d, spec);
    out.mediator_pvalues = detail::univariate_aft_pvalues(d.mediators, d, spec);
    out.kept_exposures = detail::smallest_in_order(out.exposure_pvalues, static_cast<std::size_t>(n_genes));
    out.kept_mediators = detail::smallest_in_order(out.mediator_pvalues, static_cast<std::size_t>(n_proteins));
    out.data = d;
    out.data.exposures = detail::take_columns(d.exposures, out.kept_exposures);
    out.data.mediators = detail::take_columns(d.mediators, out.kept_mediators);
    if (!d.exposure_names.empty()) out.data.exposure_names = detail::take_names(d.exposure_names, out.kept_exposures);
    if (!d.mediator_names.empty()) out.data.mediator_names = detail::take_names(d.mediator_names, out.kept_mediators);
    return out;
}

} // namespace smahp
