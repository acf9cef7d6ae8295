#pragma once
// Shared domain types: the survival dataset, penalty specification, fit results and
// the active sets threaded through the three pipeline steps.

#include <smahp/error.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

namespace smahp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IndexVector = std::vector<int>;

inline std::vector<std::string> default_names(const std::string& prefix, Eigen::Index count)
{
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(count));
    for (Eigen::Index i = 0; i < count; ++i) out.push_back(prefix + std::to_string(i + 1));
    return out;
}

/**
 * Right-censored survival data with aligned exposure (genes), mediator (proteins)
 * and covariate matrices. Times are stored on the natural-log scale.
 */
struct Dataset {
    std::vector<std::string> row_ids;
    Vector log_time;
    Eigen::VectorXi event;  // 1 = event observed, 0 = right-censored
    Matrix exposures;       // n x p
    Matrix mediators;       // n x k
    Matrix covariates;      // n x q, q may be 0
    std::vector<std::string> exposure_names;
    std::vector<std::string> mediator_names;
    std::vector<std::string> covariate_names;

    Eigen::Index n() const { return log_time.size(); }
    Eigen::Index p() const { return exposures.cols(); }
    Eigen::Index k() const { return mediators.cols(); }
    Eigen::Index q() const { return covariates.cols(); }
    Eigen::Index n_events() const { return event.sum(); }

    /// Fills any empty name vectors with generated identifiers.
    void fill_default_names()
    {
        if (row_ids.empty()) row_ids = default_names("row", n());
        if (exposure_names.empty()) exposure_names = default_names("X", p());
        if (mediator_names.empty()) mediator_names = default_names("M", k());
        if (covariate_names.empty()) covariate_names = default_names("Z", q());
    }
};

namespace detail {

inline void check_finite(const Matrix& m, const char* what)
{
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            if (!std::isfinite(m(i, j)))
                throw Error(ErrorCode::NonFinite, std::string(what) + " entry (" + std::to_string(i) +
                                                      ", " + std::to_string(j) + ") is not finite");
}

inline void check_unique(const std::vector<std::string>& names, Eigen::Index cols, const char* what)
{
    if (static_cast<Eigen::Index>(names.size()) != cols)
        throw Error(ErrorCode::ShapeMismatch, std::string(what) + " has " + std::to_string(cols) +
                                                  " columns but " + std::to_string(names.size()) + " names");
    std::unordered_set<std::string> seen;
    for (const auto& s : names)
        if (!seen.insert(s).second)
            throw Error(ErrorCode::DuplicateId, std::string(what) + " column name '" + s + "' is repeated");
}

} // namespace detail

/// Throws unless every Dataset invariant holds.
inline void validate_dataset(const Dataset& d)
{
    const Eigen::Index n = d.n();
    auto rows_ok = [n](Eigen::Index r) { return r == n; };
    if (!rows_ok(d.event.size()) || !rows_ok(d.exposures.rows()) || !rows_ok(d.mediators.rows()) ||
        !rows_ok(d.covariates.rows()))
        throw Error(ErrorCode::ShapeMismatch,
                    "row counts differ (log_time " + std::to_string(n) + ", event " + std::to_string(d.event.size()) +
                        ", exposures " + std::to_string(d.exposures.rows()) + ", mediators " +
                        std::to_string(d.mediators.rows()) + ", covariates " + std::to_string(d.covariates.rows()) +
                        ")");
    if (n < 3) throw Error(ErrorCode::ShapeMismatch, "need at least 3 rows, got " + std::to_string(n));
    if (!d.row_ids.empty() && static_cast<Eigen::Index>(d.row_ids.size()) != n)
        throw Error(ErrorCode::ShapeMismatch, "row id count differs from n");

    for (Eigen::Index i = 0; i < n; ++i) {
        if (!std::isfinite(d.log_time[i]))
            throw Error(ErrorCode::NonFinite, "log_time entry " + std::to_string(i) + " is not finite");
        if (d.event[i] != 0 && d.event[i] != 1)
            throw Error(ErrorCode::BadStatusValue, "event entry " + std::to_string(i) + " is not 0/1");
    }
    detail::check_finite(d.exposures, "exposures");
    detail::check_finite(d.mediators, "mediators");
    detail::check_finite(d.covariates, "covariates");
    if (d.event.sum() == 0) throw Error(ErrorCode::AllCensored, "no observed events");

    if (!d.exposure_names.empty()) detail::check_unique(d.exposure_names, d.p(), "exposures");
    if (!d.mediator_names.empty()) detail::check_unique(d.mediator_names, d.k(), "mediators");
    if (!d.covariate_names.empty()) detail::check_unique(d.covariate_names, d.q(), "covariates");
}

struct Standardized {
    Matrix matrix;
    Vector centers;
    Vector scales;                   // sample (n-1) sd, 1 for zero-variance columns
    std::vector<bool> zero_variance;

    IndexVector informative_columns() const
    {
        IndexVector out;
        for (std::size_t j = 0; j < zero_variance.size(); ++j)
            if (!zero_variance[j]) out.push_back(static_cast<int>(j));
        return out;
    }
};

/// Centers every column and scales it to unit sample standard deviation.
inline Standardized standardize(const Matrix& m)
{
    Standardized out;
    const Eigen::Index n = m.rows();
    out.matrix = m;
    out.centers = Vector::Zero(m.cols());
    out.scales = Vector::Ones(m.cols());
    out.zero_variance.assign(static_cast<std::size_t>(m.cols()), false);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double c = n > 0 ? m.col(j).mean() : 0.0;
        out.matrix.col(j).array() -= c;
        out.centers[j] = c;
        const double ss = out.matrix.col(j).squaredNorm();
        const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
        // relative test so that tiny rounding noise on a constant column is not amplified
        const double ref = std::max(1.0, std::abs(c));
        if (sd <= 1e-12 * ref) {
            out.zero_variance[static_cast<std::size_t>(j)] = true;
            out.matrix.col(j).setZero();
        } else {
            out.matrix.col(j) /= sd;
            out.scales[j] = sd;
        }
    }
    return out;
}

/// Maps standardized-scale coefficients to original units. Returns the slope vector;
/// `intercept_shift` receives the constant that keeps predictions identical.
inline Vector unstandardize_coefficients(const Vector& coef_std, const Vector& centers, const Vector& scales,
                                         double* intercept_shift = nullptr)
{
    Vector out = coef_std.cwiseQuotient(scales);
    if (intercept_shift) *intercept_shift = -centers.dot(out);
    return out;
}

enum class PenaltyFamily { mcp, elastic_net, lasso, ridge, sparse_group_lasso };

inline constexpr std::string_view to_string(PenaltyFamily f)
{
    switch (f) {
    case PenaltyFamily::mcp: return "mcp";
    case PenaltyFamily::elastic_net: return "elastic_net";
    case PenaltyFamily::lasso: return "lasso";
    case PenaltyFamily::ridge: return "ridge";
    case PenaltyFamily::sparse_group_lasso: return "sparse_group_lasso";
    }
    return "?";
}

inline std::optional<PenaltyFamily> parse_penalty_family(std::string_view s)
{
    if (s == "mcp") return PenaltyFamily::mcp;
    if (s == "elastic_net" || s == "elastic-net" || s == "enet") return PenaltyFamily::elastic_net;
    if (s == "lasso") return PenaltyFamily::lasso;
    if (s == "ridge") return PenaltyFamily::ridge;
    if (s == "sparse_group_lasso" || s == "sgl") return PenaltyFamily::sparse_group_lasso;
    return std::nullopt;
}

/**
 * Penalty family and tuning parameters for any Step-1 solver.
 *
 * lasso and ridge are elastic-net corners: gamma multiplies the L1 term, so lasso is
 * gamma = 1 and ridge is gamma = 0 regardless of the stored gamma.
 * Empty weight vectors mean unit weights; empty groups mean singleton groups.
 */
struct PenaltySpec {
    PenaltyFamily family = PenaltyFamily::elastic_net;
    double lambda = 0.0;
    double gamma = 0.5;
    double tau = 3.0;
    Vector feature_weights;
    Vector group_weights;
    std::vector<IndexVector> groups;

    double effective_gamma() const
    {
        switch (family) {
        case PenaltyFamily::lasso: return 1.0;
        case PenaltyFamily::ridge: return 0.0;
        default: return gamma;
        }
    }

    double weight(Eigen::Index j) const { return feature_weights.size() == 0 ? 1.0 : feature_weights[j]; }

    void validate(Eigen::Index n_features) const
    {
        if (!(lambda >= 0.0) || !std::isfinite(lambda))
            throw Error(ErrorCode::InvalidPenalty, "lambda must be finite and >= 0");
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error(ErrorCode::InvalidPenalty, "gamma must lie in [0,1]");
        if (!(tau > 1.0)) throw Error(ErrorCode::InvalidTau, "tau must exceed 1");
        if (feature_weights.size() != 0) {
            if (feature_weights.size() != n_features)
                throw Error(ErrorCode::DimensionMismatch, "feature_weights length differs from feature count");
            if ((feature_weights.array() < 0.0).any())
                throw Error(ErrorCode::InvalidPenalty, "feature weights must be nonnegative");
        }
        if (!groups.empty()) {
            std::vector<int> hits(static_cast<std::size_t>(n_features), 0);
            for (const auto& g : groups)
                for (int j : g) {
                    if (j < 0 || j >= n_features)
                        throw Error(ErrorCode::InvalidPenalty, "group index out of range");
                    ++hits[static_cast<std::size_t>(j)];
                }
            for (int h : hits)
                if (h != 1) throw Error(ErrorCode::InvalidPenalty, "groups must partition the features");
            if (group_weights.size() != 0 && group_weights.size() != static_cast<Eigen::Index>(groups.size()))
                throw Error(ErrorCode::DimensionMismatch, "group_weights length differs from group count");
            if (group_weights.size() != 0 && (group_weights.array() < 0.0).any())
                throw Error(ErrorCode::InvalidPenalty, "group weights must be nonnegative");
        }
    }

    /// Groups with singleton fallback.
    std::vector<IndexVector> effective_groups(Eigen::Index n_features) const
    {
        if (!groups.empty()) return groups;
        std::vector<IndexVector> out;
        for (Eigen::Index j = 0; j < n_features; ++j) out.push_back({static_cast<int>(j)});
        return out;
    }

    double group_weight(std::size_t l, std::size_t group_size) const
    {
        if (group_weights.size() != 0) return group_weights[static_cast<Eigen::Index>(l)];
        return std::sqrt(static_cast<double>(group_size));
    }
};

/**
 * Result of one model fit. `columns` maps coefficient positions back to the
 * caller's column indices; `intercept` is 0 for centered penalized fits.
 */
struct FitResult {
    Vector coefficients;
    std::optional<Vector> std_errors;
    IndexVector columns;
    double intercept = 0.0;
    std::optional<double> intercept_se;
    double scale = 1.0;
    double lambda = 0.0;
    double objective = 0.0;
    bool converged = false;
    int iterations = 0;

    IndexVector active(double tol = 1e-8) const
    {
        IndexVector out;
        for (Eigen::Index j = 0; j < coefficients.size(); ++j)
            if (std::abs(coefficients[j]) > tol)
                out.push_back(columns.empty() ? static_cast<int>(j) : columns[static_cast<std::size_t>(j)]);
        return out;
    }
};

/**
 * Index sets threading the pipeline: s1/t_set/j1 from Step 1, s2/j2 from Step 2.
 * Mediator and exposure indices refer to Dataset columns.
 */
struct ActiveSets {
    std::set<int> s1;
    std::set<int> t_set;
    std::map<int, std::set<int>> j1;
    std::set<int> s2;
    std::map<int, std::set<int>> j2;

    std::size_t r() const { return s2.size(); }

    std::size_t u() const
    {
        std::set<int> genes;
        for (const auto& [s, js] : j2) genes.insert(js.begin(), js.end());
        return genes.size();
    }

    std::set<int> genes_in_j2() const
    {
        std::set<int> genes;
        for (const auto& [s, js] : j2) genes.insert(js.begin(), js.end());
        return genes;
    }

    /// True iff s2 is contained in s1 and every j2[s] is a nonempty subset of j1[s].
    bool consistent() const
    {
        for (int s : s2) {
            if (!s1.contains(s)) return false;
            auto it2 = j2.find(s);
            if (it2 == j2.end() || it2->second.empty()) return false;
            auto it1 = j1.find(s);
            if (it1 == j1.end()) return false;
            for (int j : it2->second)
                if (!it1->second.contains(j)) return false;
        }
        for (const auto& [s, js] : j2)
            if (!s2.contains(s)) return false;
        return true;
    }
};

} // namespace smahp
