#pragma once
// Step 2: sure-independence screening of (mediator, gene) pairs by |alpha * beta|.

#include <smahp/aft.hpp>
#include <smahp/core.hpp>
#include <smahp/detail/parallel.hpp>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <string>
#include <vector>

namespace smahp {

struct PairScore {
    int mediator = 0;
    int gene = 0;
    double alpha = 0.0;
    double beta = 0.0;
    double score = 0.0;  // |alpha * beta|
};

/// d = floor(multiplier * n / ln n), at least 1.
inline int sis_threshold(Eigen::Index n, double multiplier = 1.0)
{
    if (n < 3) throw Error(ErrorCode::OutOfRange, "sis_threshold needs n >= 3");
    if (!(multiplier > 0.0)) throw Error(ErrorCode::OutOfRange, "sis multiplier must be positive");
    const double d = std::floor(multiplier * static_cast<double>(n) / std::log(static_cast<double>(n)));
    return std::max(1, static_cast<int>(d));
}

namespace detail {

inline Matrix columns_of(const Matrix& m, const std::set<int>& cols)
{
    Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    Eigen::Index c = 0;
    for (int j : cols) out.col(c++) = m.col(j);
    return out;
}

} // namespace detail

/**
 * For each s in S1: beta_s from the AFT fit of log T on (X_T, M_s) and the alpha vector
 * from OLS of M_s on X_{J1^s} with intercept. Mediators whose fits fail are dropped and
 * reported through `warnings`.
 */
inline std::vector<PairScore> score_pairs(const Dataset& d, const ActiveSets& sets, const AftSpec& spec = {},
                                          std::vector<std::string>* warnings = nullptr)
{
    std::vector<int> meds;
    for (int s : sets.s1) {
        auto it = sets.j1.find(s);
        if (it != sets.j1.end() && !it->second.empty()) meds.push_back(s);
    }
    const Matrix xt = detail::columns_of(d.exposures, sets.t_set);
    std::vector<std::vector<PairScore>> per(meds.size());
    std::vector<std::string> failures(meds.size());
    detail::parallel_for(meds.size(), [&](std::size_t m) {
        const int s = meds[m];
        const auto& genes = sets.j1.at(s);
        try {
            Matrix design(d.n(), xt.cols() + 1);
            design << xt, d.mediators.col(s);
            const auto out = fit_aft_mle(design, d.log_time, d.event, spec);
            if (!out.converged) throw Error(ErrorCode::NoConvergence, "outcome fit did not converge");
            const double beta = out.coefficients[xt.cols()];
            const auto med = fit_ols(detail::columns_of(d.exposures, genes), d.mediators.col(s));
            Eigen::Index c = 0;
            for (int j : genes) {
                const double alpha = med.coefficients[c++];
                per[m].push_back({s, j, alpha, beta, std::abs(alpha * beta)});
            }
        } catch (const Error& e) {
            failures[m] = "step 2: mediator " + std::to_string(s) + " dropped (" + e.what() + ")";
        }
    });
    std::vector<PairScore> out;
    for (std::size_t m = 0; m < meds.size(); ++m) {
        out.insert(out.end(), per[m].begin(), per[m].end());
        if (warnings && !failures[m].empty()) warnings->push_back(failures[m]);
    }
    return out;
}

/// Canonical ranking: larger score first, then smaller mediator, then smaller gene.
inline bool pair_rank_less(const PairScore& a, const PairScore& b)
{
    if (a.score != b.score) return a.score > b.score;
    if (a.mediator != b.mediator) return a.mediator < b.mediator;
    return a.gene < b.gene;
}

/// Keeps the top `d` pairs globally; fills s2 / j2 of a copy of `base`.
inline ActiveSets select_top_pairs(std::vector<PairScore> scores, int d, ActiveSets base = {})
{
    if (d < 1) throw Error(ErrorCode::OutOfRange, "screening size must be >= 1");
    std::sort(scores.begin(), scores.end(), pair_rank_less);
    if (scores.size() > static_cast<std::size_t>(d)) scores.resize(static_cast<std::size_t>(d));
    base.s2.clear();
    base.j2.clear();
    for (const auto& ps : scores) {
        base.s2.insert(ps.mediator);
        base.j2[ps.mediator].insert(ps.gene);
    }
    return base;
}

} // namespace smahp
