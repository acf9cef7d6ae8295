#pragma once
// Step 3: joint outcome model, per-mediator mediation models, max-p joint significance
// and Benjamini-Hochberg adjustment, and NDE / NIE estimates.

#include <smahp/aft.hpp>
#include <smahp/core.hpp>
#include <smahp/detail/parallel.hpp>
#include <smahp/screening.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

namespace smahp {

struct Step3Fits {
    FitResult outcome;                         // log T ~ X_T + Z + M_S2
    std::map<int, Eigen::Index> gene_column;   // exposure index -> coefficient position in outcome
    std::map<int, Eigen::Index> mediator_column;
    std::map<int, FitResult> mediator;         // s -> M_s ~ X_{J2^s} + Z (alpha in the first |J2^s| slots)
};

/**
 * Fits the joint AFT outcome model on (X_T, Z, M_S2) and one OLS mediation model per
 * s in S2 on (X_{J2^s}, Z), both with intercepts.
 */
inline Step3Fits fit_step3_models(const Dataset& d, const ActiveSets& sets, const AftSpec& spec = {})
{
    if (sets.s2.empty()) throw Error(ErrorCode::OutOfRange, "step 3 needs a nonempty S2");
    Step3Fits out;
    const auto nt = static_cast<Eigen::Index>(sets.t_set.size());
    const auto ns = static_cast<Eigen::Index>(sets.s2.size());
    Matrix design(d.n(), nt + d.q() + ns);
    Eigen::Index c = 0;
    for (int j : sets.t_set) {
        out.gene_column[j] = c;
        design.col(c++) = d.exposures.col(j);
    }
    design.middleCols(c, d.q()) = d.covariates;
    c += d.q();
    for (int s : sets.s2) {
        out.mediator_column[s] = c;
        design.col(c++) = d.mediators.col(s);
    }
    out.outcome = fit_aft_mle(design, d.log_time, d.event, spec);
    if (!out.outcome.converged) throw Error(ErrorCode::NoConvergence, "step 3 outcome model did not converge");

    std::vector<int> meds(sets.s2.begin(), sets.s2.end());
    std::vector<FitResult> fits(meds.size());
    detail::parallel_for(meds.size(), [&](std::size_t m) {
        const auto& genes = sets.j2.at(meds[m]);
        Matrix x(d.n(), static_cast<Eigen::Index>(genes.size()) + d.q());
        Eigen::Index cc = 0;
        for (int j : genes) x.col(cc++) = d.exposures.col(j);
        x.rightCols(d.q()) = d.covariates;
        fits[m] = fit_ols(x, d.mediators.col(meds[m]));
    });
    for (std::size_t m = 0; m < meds.size(); ++m) out.mediator[meds[m]] = std::move(fits[m]);
    return out;
}

/// Joint-significance p-value max(p_alpha, p_beta).
inline double pmax(double p_alpha, double p_beta)
{
    if (!(p_alpha > 0.0 && p_alpha <= 1.0) || !(p_beta > 0.0 && p_beta <= 1.0))
        throw Error(ErrorCode::OutOfRange, "p-values must lie in (0, 1]");
    return std::max(p_alpha, p_beta);
}

/// Benjamini-Hochberg step-up adjustment; m defaults to the number of p-values.
inline std::vector<double> bh_adjust(const std::vector<double>& p, std::size_t m = 0)
{
    if (m == 0) m = p.size();
    if (m < p.size()) throw Error(ErrorCode::OutOfRange, "BH m must be at least the number of p-values");
    for (double v : p)
        if (!(v > 0.0 && v <= 1.0)) throw Error(ErrorCode::OutOfRange, "p-values must lie in (0, 1]");
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
    std::vector<double> out(p.size());
    double running = 1.0;
    for (std::size_t r = p.size(); r-- > 0;) {
        const std::size_t i = order[r];
        running = std::min(running, p[i] * (static_cast<double>(m) / static_cast<double>(r + 1)));
        out[i] = std::min(running, 1.0);
    }
    return out;
}

/// u x r matrices over genes (rows) and mediators (cols); absent cells hold NaN.
struct PMaxMatrix {
    std::vector<int> genes;
    std::vector<int> mediators;
    Matrix p_alpha;
    Vector p_beta;
    Matrix p_max;
    Matrix p_adj;

    bool present(Eigen::Index row, Eigen::Index col) const { return !std::isnan(p_alpha(row, col)); }
};

namespace detail {

inline void adjust_present_cells(PMaxMatrix& pm)
{
    std::vector<double> flat;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> where;
    for (Eigen::Index c = 0; c < pm.p_max.cols(); ++c)
        for (Eigen::Index r = 0; r < pm.p_max.rows(); ++r)
            if (pm.present(r, c)) {
                flat.push_back(pm.p_max(r, c));
                where.emplace_back(r, c);
            }
    const auto adj = bh_adjust(flat);
    pm.p_adj = Matrix::Constant(pm.p_max.rows(), pm.p_max.cols(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < adj.size(); ++i) pm.p_adj(where[i].first, where[i].second) = adj[i];
}

} // namespace detail

/// Assembles P_max from explicit component p-values (NaN marks an absent cell).
inline PMaxMatrix make_pmax_matrix(std::vector<int> genes, std::vector<int> mediators, Matrix p_alpha, Vector p_beta)
{
    PMaxMatrix pm;
    pm.genes = std::move(genes);
    pm.mediators = std::move(mediators);
    pm.p_alpha = std::move(p_alpha);
    pm.p_beta = std::move(p_beta);
    pm.p_max = Matrix::Constant(pm.p_alpha.rows(), pm.p_alpha.cols(), std::numeric_limits<double>::quiet_NaN());
    for (Eigen::Index c = 0; c < pm.p_alpha.cols(); ++c)
        for (Eigen::Index r = 0; r < pm.p_alpha.rows(); ++r)
            if (pm.present(r, c)) pm.p_max(r, c) = pmax(pm.p_alpha(r, c), pm.p_beta[c]);
    detail::adjust_present_cells(pm);
    return pm;
}

inline PMaxMatrix build_pmax_matrix(const Step3Fits& fits, const ActiveSets& sets)
{
    const auto genes_set = sets.genes_in_j2();
    std::vector<int> genes(genes_set.begin(), genes_set.end());
    std::vector<int> meds(sets.s2.begin(), sets.s2.end());
    std::map<int, Eigen::Index> row_of;
    for (std::size_t r = 0; r < genes.size(); ++r) row_of[genes[r]] = static_cast<Eigen::Index>(r);

    const auto u = static_cast<Eigen::Index>(genes.size());
    const auto r = static_cast<Eigen::Index>(meds.size());
    Matrix pa = Matrix::Constant(u, r, std::numeric_limits<double>::quiet_NaN());
    Vector pb(r);
    for (Eigen::Index c = 0; c < r; ++c) {
        const int s = meds[static_cast<std::size_t>(c)];
        pb[c] = coefficient_pvalue(fits.outcome, fits.mediator_column.at(s));
        const auto& mf = fits.mediator.at(s);
        Eigen::Index slot = 0;
        for (int j : sets.j2.at(s)) pa(row_of.at(j), c) = coefficient_pvalue(mf, slot++);
    }
    return make_pmax_matrix(std::move(genes), std::move(meds), std::move(pa), std::move(pb));
}

struct MediationRecord {
    int gene = 0;
    int mediator = 0;
    std::string gene_id;
    std::string mediator_id;
    double alpha_hat = 0.0, alpha_se = 0.0;
    double beta_hat = 0.0, beta_se = 0.0;
    double p_alpha = 1.0, p_beta = 1.0, p_max = 1.0, p_adj = 1.0;
    double nie = 0.0;
    bool significant = false;
};

/// Report order: p_adj ascending, then mediator, then gene.
inline void sort_records(std::vector<MediationRecord>& recs)
{
    std::sort(recs.begin(), recs.end(), [](const MediationRecord& a, const MediationRecord& b) {
        if (a.p_adj != b.p_adj) return a.p_adj < b.p_adj;
        if (a.mediator != b.mediator) return a.mediator < b.mediator;
        return a.gene < b.gene;
    });
}

struct Effects {
    std::map<int, double> nde;         // exposure -> direct effect
    std::vector<MediationRecord> records;
    std::map<int, double> global_nie;  // mediator -> sum of alpha * beta over J2^s
};

inline Effects estimate_effects(const Step3Fits& fits, const ActiveSets& sets, const PMaxMatrix& pm, double q = 0.05)
{
    Effects out;
    for (const auto& [j, col] : fits.gene_column) out.nde[j] = fits.outcome.coefficients[col];
    std::map<int, Eigen::Index> row_of;
    for (std::size_t r = 0; r < pm.genes.size(); ++r) row_of[pm.genes[r]] = static_cast<Eigen::Index>(r);
    for (std::size_t c = 0; c < pm.mediators.size(); ++c) {
        const int s = pm.mediators[c];
        const Eigen::Index bcol = fits.mediator_column.at(s);
        const double beta = fits.outcome.coefficients[bcol];
        const double beta_se = fits.outcome.std_errors ? (*fits.outcome.std_errors)[bcol] : 0.0;
        const auto& mf = fits.mediator.at(s);
        double total = 0.0;
        Eigen::Index slot = 0;
        for (int j : sets.j2.at(s)) {
            MediationRecord rec;
            rec.gene = j;
            rec.mediator = s;
            rec.alpha_hat = mf.coefficients[slot];
            rec.alpha_se = mf.std_errors ? (*mf.std_errors)[slot] : 0.0;
            ++slot;
            rec.beta_hat = beta;
            rec.beta_se = beta_se;
            const Eigen::Index row = row_of.at(j), col = static_cast<Eigen::Index>(c);
            rec.p_alpha = pm.p_alpha(row, col);
            rec.p_beta = pm.p_beta[col];
            rec.p_max = pm.p_max(row, col);
            rec.p_adj = pm.p_adj(row, col);
            rec.nie = rec.alpha_hat * rec.beta_hat;
            rec.significant = rec.p_adj <= q;
            total += rec.nie;
            out.records.push_back(rec);
        }
        out.global_nie[s] = total;
    }
    sort_records(out.records);
    return out;
}

} // namespace smahp
