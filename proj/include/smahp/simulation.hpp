#pragma once
// Synthetic exposure / mediator / survival data with known mediation pairs, censoring
// calibration and power / FDR scoring.

#include <smahp/core.hpp>
#include <smahp/detail/rng.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace smahp {

struct SimScenario {
    std::string name = "custom";
    int n = 200;
    int p = 50;
    int k = 100;
    double censor_rate = 0.25;

    double frac_m_blockA = 0.4;
    double frac_m_blockB = 0.4;
    double frac_m_covonly = 0.1;
    double frac_m_null = 0.1;
    double frac_x_per_block = 0.10;

    double effect_xm = 0.8;
    double effect_zm_blockA = 0.2;  // both Z1 and Z2
    double effect_z1_covonly = 0.2;
    double effect_z2_covonly = 0.3;
    double sd_blockA = 0.5;
    double sd_blockB = 0.3;
    double sd_covonly = 0.5;
    double sd_null = 0.3;

    double x_mean = 0.4;
    double x_sd = 0.5;
    double z1_mean = 0.12;
    double z1_sd = 0.75;
    double z2_prob = 0.3;

    double effect_x_direct = 0.8;
    double effect_m_outcome = 4.0;
    double effect_z_outcome = 0.12;
    double outcome_error_sd = 1.0;
    int n_direct_genes = 2;
    int n_outcome_mediators = 4;  // split between blocks A and B, A first

    std::uint64_t seed = 1;

    void validate() const
    {
        auto bad = [](const std::string& m) { return Error(ErrorCode::InvalidScenario, m); };
        if (n < 3 || p < 1 || k < 1) throw bad("n must be >= 3 and p, k >= 1");
        if (!(censor_rate > 0.0 && censor_rate < 1.0)) throw bad("censor_rate must lie in (0, 1)");
        for (double f : {frac_m_blockA, frac_m_blockB, frac_m_covonly, frac_m_null, frac_x_per_block})
            if (!(f >= 0.0 && f <= 1.0)) throw bad("fractions must lie in [0, 1]");
        if (std::abs(frac_m_blockA + frac_m_blockB + frac_m_covonly + frac_m_null - 1.0) > 1e-12)
            throw bad("mediator block fractions must sum to 1");
        if (!(x_sd > 0.0 && z1_sd > 0.0 && outcome_error_sd > 0.0)) throw bad("standard deviations must be positive");
        if (!(z2_prob >= 0.0 && z2_prob <= 1.0)) throw bad("z2_prob must lie in [0, 1]");
        if (n_direct_genes < 0 || n_direct_genes > p) throw bad("n_direct_genes out of range");
        if (n_outcome_mediators < 0) throw bad("n_outcome_mediators must be >= 0");
        const auto c = block_counts();
        if (c[0] + c[1] + c[2] + c[3] != k) throw bad("mediator block counts do not add up to k");
        const int need_a = (n_outcome_mediators + 1) / 2, need_b = n_outcome_mediators / 2;
        if (need_a > c[0] || need_b > c[1]) throw bad("not enough block A/B mediators for the outcome mediators");
        if (2 * linked_count() > p) throw bad("linked exposure sets for blocks A and B do not fit in p");
    }

    /// Mediator counts for blocks A, B, covariate-only and null (in that column order).
    std::array<int, 4> block_counts() const
    {
        auto cnt = [&](double f) { return f > 0.0 ? std::max(1, static_cast<int>(std::lround(f * k))) : 0; };
        std::array<int, 4> c{cnt(frac_m_blockA), cnt(frac_m_blockB), cnt(frac_m_covonly), 0};
        c[3] = k - c[0] - c[1] - c[2];
        if (frac_m_null > 0.0 && c[3] < 1) c[3] = 1;
        return c;
    }

    int linked_count() const
    {
        return frac_x_per_block > 0.0 ? std::max(1, static_cast<int>(std::lround(frac_x_per_block * p))) : 0;
    }

    /// Scenarios I-IV: (p, k) = (50, 100), (50, 200), (100, 100), (100, 200).
    static SimScenario preset(std::string_view id, int n = 200, double censor = 0.25)
    {
        SimScenario s;
        s.name = std::string(id);
        s.n = n;
        s.censor_rate = censor;
        if (id == "I") s.p = 50, s.k = 100;
        else if (id == "II") s.p = 50, s.k = 200;
        else if (id == "III") s.p = 100, s.k = 100;
        else if (id == "IV") s.p = 100, s.k = 200;
        else throw Error(ErrorCode::InvalidScenario, "unknown scenario '" + std::string(id) + "'");
        return s;
    }
};

using GenePair = std::pair<int, int>;  // (gene j, mediator s)

struct GroundTruth {
    std::set<GenePair> true_pairs;
    std::set<int> direct_genes;
    std::set<int> outcome_mediators;
    std::vector<int> linked_a;
    std::vector<int> linked_b;
    std::vector<int> mediator_block;  // 0 = A, 1 = B, 2 = covariate-only, 3 = null
};

namespace detail {

// Random structure (linked genes, outcome mediators, direct genes) fixed by the seed.
inline GroundTruth draw_structure(const SimScenario& scn)
{
    Rng rng(derive_seed({scn.seed, 0x5157ull}));
    GroundTruth g;
    const auto c = scn.block_counts();
    for (int b = 0; b < 4; ++b) g.mediator_block.insert(g.mediator_block.end(), static_cast<std::size_t>(c[b]), b);

    std::vector<int> genes(static_cast<std::size_t>(scn.p));
    std::iota(genes.begin(), genes.end(), 0);
    std::shuffle(genes.begin(), genes.end(), rng);
    const int l = scn.linked_count();
    g.linked_a.assign(genes.begin(), genes.begin() + l);
    g.linked_b.assign(genes.begin() + l, genes.begin() + 2 * l);
    std::sort(g.linked_a.begin(), g.linked_a.end());
    std::sort(g.linked_b.begin(), g.linked_b.end());

    auto pick = [&](int first, int count, int take) {
        std::vector<int> idx(static_cast<std::size_t>(count));
        std::iota(idx.begin(), idx.end(), first);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(static_cast<std::size_t>(take));
        return idx;
    };
    for (int s : pick(0, c[0], (scn.n_outcome_mediators + 1) / 2)) g.outcome_mediators.insert(s);
    for (int s : pick(c[0], c[1], scn.n_outcome_mediators / 2)) g.outcome_mediators.insert(s);
    for (int j : pick(0, scn.p, scn.n_direct_genes)) g.direct_genes.insert(j);

    // a pair is true only when both legs carry a nonzero effect
    if (scn.effect_xm != 0.0 && scn.effect_m_outcome != 0.0) {
        for (int s : g.outcome_mediators) {
            const auto& linked = g.mediator_block[static_cast<std::size_t>(s)] == 0 ? g.linked_a : g.linked_b;
            for (int j : linked) g.true_pairs.insert({j, s});
        }
    }
    return g;
}

struct LatentDraw {
    Matrix x, m, z;
    Vector log_t;
};

// Draws X, Z, M and log T for `rows` subjects. With `outcome_only` only log T is kept and
// only the columns that feed it are drawn (used for the calibration pilot).
inline LatentDraw draw_latent(const SimScenario& scn, const GroundTruth& g, Eigen::Index rows, Rng& rng,
                              bool outcome_only)
{
    std::normal_distribution<double> std_normal;
    std::bernoulli_distribution z2(scn.z2_prob);
    LatentDraw d;
    d.log_t.resize(rows);
    if (!outcome_only) {
        d.x.resize(rows, scn.p);
        d.m.resize(rows, scn.k);
        d.z.resize(rows, 2);
    }
    std::vector<char> need_m(static_cast<std::size_t>(scn.k), outcome_only ? 0 : 1);
    for (int s : g.outcome_mediators) need_m[static_cast<std::size_t>(s)] = 1;
    std::vector<char> need_x(static_cast<std::size_t>(scn.p), outcome_only ? 0 : 1);
    if (outcome_only) {
        for (int j : g.direct_genes) need_x[static_cast<std::size_t>(j)] = 1;
        for (int j : g.linked_a) need_x[static_cast<std::size_t>(j)] = 1;
        for (int j : g.linked_b) need_x[static_cast<std::size_t>(j)] = 1;
    }
    std::vector<double> x(static_cast<std::size_t>(scn.p), 0.0), m(static_cast<std::size_t>(scn.k), 0.0);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (int j = 0; j < scn.p; ++j)
            if (need_x[static_cast<std::size_t>(j)]) x[static_cast<std::size_t>(j)] = scn.x_mean + scn.x_sd * std_normal(rng);
        const double z1 = scn.z1_mean + scn.z1_sd * std_normal(rng);
        const double zz2 = z2(rng) ? 1.0 : 0.0;
        double sum_a = 0.0, sum_b = 0.0;
        for (int j : g.linked_a) sum_a += x[static_cast<std::size_t>(j)];
        for (int j : g.linked_b) sum_b += x[static_cast<std::size_t>(j)];
        for (int s = 0; s < scn.k; ++s) {
            const auto su = static_cast<std::size_t>(s);
            if (!need_m[su]) continue;
            const double e = std_normal(rng);
            switch (g.mediator_block[su]) {
            case 0: m[su] = scn.effect_xm * sum_a + scn.effect_zm_blockA * (z1 + zz2) + scn.sd_blockA * e; break;
            case 1: m[su] = scn.effect_xm * sum_b + scn.sd_blockB * e; break;
            case 2: m[su] = scn.effect_z1_covonly * z1 + scn.effect_z2_covonly * zz2 + scn.sd_covonly * e; break;
            default: m[su] = scn.sd_null * e; break;
            }
        }
        double lt = scn.effect_z_outcome * (z1 + zz2) + scn.outcome_error_sd * std_normal(rng);
        for (int j : g.direct_genes) lt += scn.effect_x_direct * x[static_cast<std::size_t>(j)];
        for (int s : g.outcome_mediators) lt += scn.effect_m_outcome * m[static_cast<std::size_t>(s)];
        d.log_t[i] = lt;
        if (!outcome_only) {
            d.x.row(i) = Eigen::Map<const Eigen::RowVectorXd>(x.data(), scn.p);
            d.m.row(i) = Eigen::Map<const Eigen::RowVectorXd>(m.data(), scn.k);
            d.z(i, 0) = z1;
            d.z(i, 1) = zz2;
        }
    }
    return d;
}

/// Fraction censored, P(C < T), for exponential censoring with log-rate `log_rate`.
inline double censored_fraction(const Vector& log_t, double log_rate)
{
    double s = 0.0;
    for (Eigen::Index i = 0; i < log_t.size(); ++i) s += -std::expm1(-std::exp(log_rate + log_t[i]));
    return s / static_cast<double>(log_t.size());
}

} // namespace detail

/**
 * Exponential censoring rate r with P(C < T) equal to the target, by bisection in log r
 * on a seeded pilot sample of 100,000 event times.
 */
inline double calibrate_censoring(const SimScenario& scn, Eigen::Index pilot_size = 100000)
{
    scn.validate();
    const auto g = detail::draw_structure(scn);
    detail::Rng rng(detail::derive_seed({scn.seed, 0x9170ull}));
    const auto pilot = detail::draw_latent(scn, g, pilot_size, rng, true);
    const double span = pilot.log_t.cwiseAbs().maxCoeff();
    double lo = -span - 60.0, hi = span + 60.0;
    if (!(detail::censored_fraction(pilot.log_t, lo) < scn.censor_rate &&
          detail::censored_fraction(pilot.log_t, hi) > scn.censor_rate))
        throw Error(ErrorCode::CalibrationFailure, "censoring bracket not found");
    for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
        const double mid = 0.5 * (lo + hi);
        (detail::censored_fraction(pilot.log_t, mid) < scn.censor_rate ? lo : hi) = mid;
    }
    return std::exp(0.5 * (lo + hi));
}

struct Simulated {
    Dataset data;
    GroundTruth truth;
    double censoring_rate_param = 0.0;  // exponential rate
};

/// Draws one dataset; identical scenarios (including seed) give bit-identical output.
inline Simulated generate(const SimScenario& scn)
{
    scn.validate();
    Simulated out;
    out.truth = detail::draw_structure(scn);
    out.censoring_rate_param = calibrate_censoring(scn);
    detail::Rng rng(detail::derive_seed({scn.seed, 0xDA7Aull}));
    auto lat = detail::draw_latent(scn, out.truth, scn.n, rng, false);
    std::exponential_distribution<double> cens(1.0);
    Dataset& d = out.data;
    d.log_time.resize(scn.n);
    d.event.resize(scn.n);
    const double log_r = std::log(out.censoring_rate_param);
    for (int i = 0; i < scn.n; ++i) {
        const double log_c = std::log(cens(rng)) - log_r;
        d.event[i] = lat.log_t[i] <= log_c ? 1 : 0;
        d.log_time[i] = std::min(lat.log_t[i], log_c);
    }
    d.exposures = std::move(lat.x);
    d.mediators = std::move(lat.m);
    d.covariates = std::move(lat.z);
    d.covariate_names = {"Z1", "Z2"};
    d.fill_default_names();
    return out;
}

struct Score {
    double power = 0.0;
    double fdr = 0.0;
};

/// power = |detected ∩ truth| / |truth|; fdr = |detected \ truth| / max(|detected|, 1).
inline Score score(const std::set<GenePair>& detected, const GroundTruth& truth)
{
    std::size_t tp = 0;
    for (const auto& pr : detected)
        if (truth.true_pairs.contains(pr)) ++tp;
    Score s;
    s.power = truth.true_pairs.empty() ? 0.0
                                       : static_cast<double>(tp) / static_cast<double>(truth.true_pairs.size());
    s.fdr = static_cast<double>(detected.size() - tp) / static_cast<double>(std::max<std::size_t>(detected.size(), 1));
    return s;
}

} // namespace smahp
