#include <smahp/aft.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace smahp;

namespace {

struct AftData {
    Matrix x;
    Vector y;
    Eigen::VectorXi event;
};

// log T = 1 + x'beta + sigma * eps, censored by independent normal log-censoring times.
AftData simulate(std::mt19937_64& rng, int n, const Vector& beta, double sigma, double censor_shift,
                 AftFamily family = AftFamily::log_normal)
{
    std::normal_distribution<double> z;
    std::extreme_value_distribution<double> gumbel_max;
    AftData d{Matrix(n, beta.size()), Vector(n), Eigen::VectorXi(n)};
    for (int i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < beta.size(); ++j) d.x(i, j) = z(rng);
        const double eps = family == AftFamily::log_normal ? z(rng) : -gumbel_max(rng);
        const double t = 1.0 + d.x.row(i).dot(beta) + sigma * eps;
        const double c = censor_shift + 1.0 + 1.5 * z(rng);
        d.y[i] = std::min(t, c);
        d.event[i] = t <= c ? 1 : 0;
    }
    return d;
}

Vector fd_gradient(const Vector& theta, const Matrix& x, const AftData& d, const AftSpec& spec)
{
    const Eigen::Index p = x.cols();
    Vector g(p + 1);
    const double h = 1e-5;
    for (Eigen::Index k = 0; k <= p; ++k) {
        Vector up = theta, dn = theta;
        up[k] += h;
        dn[k] -= h;
        g[k] = (aft_loglik(up.head(p), up[p], x, d.y, d.event, spec) -
                aft_loglik(dn.head(p), dn[p], x, d.y, d.event, spec)) /
               (2 * h);
    }
    return g;
}

Matrix add_intercept(const Matrix& x)
{
    Matrix out(x.rows(), x.cols() + 1);
    out << Vector::Ones(x.rows()), x;
    return out;
}

} // namespace

TEST(AftLoglik, UncensoredLogNormalIsNormalLikelihood)
{
    std::mt19937_64 rng(1);
    Vector beta(2);
    beta << 0.5, -1.0;
    auto d = simulate(rng, 30, beta, 0.8, 100.0);
    ASSERT_EQ(d.event.sum(), 30);
    const Matrix x = add_intercept(d.x);
    Vector b(3);
    b << 0.9, 0.4, -1.1;
    const double log_b = std::log(0.7);
    double expected = 0.0;
    for (int i = 0; i < 30; ++i) {
        const double r = (d.y[i] - x.row(i).dot(b)) / 0.7;
        expected += -0.5 * std::log(2 * M_PI) - 0.5 * r * r;
    }
    expected -= 30 * log_b;
    EXPECT_NEAR(aft_loglik(b, log_b, x, d.y, d.event, {}), expected, 1e-10);
}

TEST(AftLoglik, CensoredGumbelAtZero)
{
    Matrix x = Matrix::Ones(3, 1);
    Vector y = Vector::Constant(3, 2.0);
    Eigen::VectorXi ev = Eigen::VectorXi::Zero(3);
    Vector b(1);
    b << 2.0;
    AftSpec spec{AftFamily::log_weibull, true};
    // S(0) = exp(-e^0) = e^-1, so each row contributes -1 whatever the scale
    EXPECT_NEAR(aft_loglik(b, 0.0, x, y, ev, spec), -3.0, 1e-14);
    EXPECT_NEAR(aft_loglik(b, std::log(3.0), x, y, ev, spec), -3.0, 1e-14);
}

TEST(AftLoglik, LogScaleRoundTrip)
{
    std::mt19937_64 rng(2);
    Vector beta(1);
    beta << 1.0;
    auto d = simulate(rng, 25, beta, 1.0, 0.0);
    const Matrix x = add_intercept(d.x);
    const double b = 1.37;
    Vector th(2);
    th << 0.2, 0.8;
    EXPECT_EQ(aft_loglik(th, std::log(b), x, d.y, d.event, {}),
              aft_loglik(th, std::log(std::exp(std::log(b))), x, d.y, d.event, {}));
}

TEST(AftLoglik, DimensionMismatchThrows)
{
    Matrix x = Matrix::Ones(3, 2);
    Vector b = Vector::Zero(1);
    try {
        aft_loglik(b, 0.0, x, Vector::Zero(3), Eigen::VectorXi::Ones(3), {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
    }
}

TEST(AftLoglik, AnalyticDerivativesMatchFiniteDifferences)
{
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z;
    for (const auto family : {AftFamily::log_normal, AftFamily::log_weibull}) {
        const AftSpec spec{family, true};
        for (int r = 0; r < 100; ++r) {
            Vector beta(2);
            beta << z(rng), z(rng);
            auto d = simulate(rng, 40, beta, 1.0, 0.0, family);
            const Matrix x = add_intercept(d.x);
            Vector theta(4);
            theta << 0.5 * z(rng), beta[0] + 0.3 * z(rng), beta[1] + 0.3 * z(rng), 0.3 * z(rng);
            Vector g;
            Matrix h;
            aft_loglik(theta.head(3), theta[3], x, d.y, d.event, spec, &g, &h);
            const Vector fd = fd_gradient(theta, x, d, spec);
            for (int k = 0; k < 4; ++k)
                EXPECT_NEAR(g[k], fd[k], 1e-4 * std::max(1.0, std::abs(fd[k]))) << "family " << to_string(family);
            // Hessian column by differencing the analytic gradient
            for (int k = 0; k < 4; ++k) {
                Vector up = theta, dn = theta;
                up[k] += 1e-5;
                dn[k] -= 1e-5;
                Vector gu, gd;
                aft_loglik(up.head(3), up[3], x, d.y, d.event, spec, &gu);
                aft_loglik(dn.head(3), dn[3], x, d.y, d.event, spec, &gd);
                const Vector col = (gu - gd) / 2e-5;
                for (int m = 0; m < 4; ++m) EXPECT_NEAR(h(m, k), col[m], 1e-4 * std::max(1.0, std::abs(col[m])));
            }
        }
    }
}

TEST(FitAftMle, UncensoredLogNormalEqualsOls)
{
    std::mt19937_64 rng(4);
    Vector beta(3);
    beta << 0.5, -0.2, 1.0;
    auto d = simulate(rng, 150, beta, 0.6, 100.0);
    ASSERT_EQ(d.event.sum(), 150);
    const auto fit = fit_aft_mle(d.x, d.y, d.event);
    ASSERT_TRUE(fit.converged);
    const Matrix x = add_intercept(d.x);
    const Vector ols = (x.transpose() * x).ldlt().solve(x.transpose() * d.y);
    EXPECT_NEAR(fit.intercept, ols[0], 1e-6);
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(fit.coefficients[j], ols[j + 1], 1e-6);
    const double mle_var = (d.y - x * ols).squaredNorm() / 150.0;
    EXPECT_NEAR(fit.scale * fit.scale, mle_var, 1e-6);
}

TEST(FitAftMle, GradientVanishesAtOptimum)
{
    std::mt19937_64 rng(5);
    Vector beta(2);
    beta << 0.7, -0.4;
    for (const auto family : {AftFamily::log_normal, AftFamily::log_weibull}) {
        auto d = simulate(rng, 300, beta, 0.9, 0.5, family);
        const AftSpec spec{family, true};
        const auto fit = fit_aft_mle(d.x, d.y, d.event, spec);
        ASSERT_TRUE(fit.converged);
        Vector th(3);
        th << fit.intercept, fit.coefficients;
        Vector g;
        aft_loglik(th, std::log(fit.scale), add_intercept(d.x), d.y, d.event, spec, &g);
        EXPECT_LT(g.lpNorm<Eigen::Infinity>(), 1e-6);
        ASSERT_TRUE(fit.std_errors.has_value());
        EXPECT_TRUE((fit.std_errors->array() > 0).all());
        // ascent from the all-zero start
        EXPECT_GE(fit.objective, aft_loglik(Vector::Zero(3), 0.0, add_intercept(d.x), d.y, d.event, spec));
    }
}

TEST(FitAftMle, WaldIntervalsCoverTruth)
{
    Vector beta(3);
    beta << 0.5, -0.8, 0.2;
    int covered = 0, total = 0;
    for (int rep = 0; rep < 100; ++rep) {
        std::mt19937_64 rng(500 + rep);
        auto d = simulate(rng, 2000, beta, 1.0, 1.3);
        if (rep == 0) {
            const double cens = 1.0 - d.event.cast<double>().mean();
            EXPECT_NEAR(cens, 0.25, 0.05);
        }
        const auto fit = fit_aft_mle(d.x, d.y, d.event);
        ASSERT_TRUE(fit.converged);
        for (int j = 0; j < 3; ++j) {
            ++total;
            if (std::abs(fit.coefficients[j] - beta[j]) <= 3.0 * (*fit.std_errors)[j]) ++covered;
        }
    }
    EXPECT_GE(static_cast<double>(covered) / total, 0.95);
}

TEST(FitAftMle, InsufficientEventsAndRankDeficiency)
{
    Matrix x(6, 3);
    x << 1, 2, 3, 4, 5, 6, 7, 8, 9, 1, 0, 1, 2, 2, 1, 3, 1, 4;
    Vector y(6);
    y << 1, 2, 3, 4, 5, 6;
    Eigen::VectorXi ev(6);
    ev << 1, 1, 1, 1, 0, 0;
    try {
        fit_aft_mle(x, y, ev);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InsufficientEvents);
    }
    Matrix dup(6, 2);
    dup.col(0) = x.col(0);
    dup.col(1) = 2.0 * x.col(0);
    try {
        fit_aft_mle(dup, y, Eigen::VectorXi::Ones(6));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::RankDeficientDesign);
    }
}

TEST(FitOls, MatchesNormalEquationsAndClassicalSe)
{
    std::mt19937_64 rng(6);
    std::normal_distribution<double> z;
    const int n = 60;
    Matrix x(n, 2);
    Vector y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = z(rng);
        x(i, 1) = z(rng) + 0.5 * x(i, 0);
        y[i] = 2.0 + x(i, 0) - 0.5 * x(i, 1) + 0.3 * z(rng);
    }
    const auto fit = fit_ols(x, y);
    const Matrix a = add_intercept(x);
    const Matrix xtx = a.transpose() * a;
    const Vector b = xtx.ldlt().solve(a.transpose() * y);
    const double s2 = (y - a * b).squaredNorm() / (n - 3);
    const Matrix inv = xtx.inverse();
    EXPECT_NEAR(fit.intercept, b[0], 1e-10);
    EXPECT_NEAR(*fit.intercept_se, std::sqrt(s2 * inv(0, 0)), 1e-10);
    for (int j = 0; j < 2; ++j) {
        EXPECT_NEAR(fit.coefficients[j], b[j + 1], 1e-10);
        EXPECT_NEAR((*fit.std_errors)[j], std::sqrt(s2 * inv(j + 1, j + 1)), 1e-10);
    }
}

TEST(WaldPvalue, Examples)
{
    EXPECT_DOUBLE_EQ(wald_pvalue(0.0, 1.0), 1.0);
    EXPECT_NEAR(wald_pvalue(1.959964, 1.0), 0.05, 1e-4);
    EXPECT_NEAR(wald_pvalue(-1.959964, 1.0), 0.05, 1e-4);
    double prev = 1.0;
    for (int i = 1; i <= 200; ++i) {
        const double p = wald_pvalue(0.05 * i, 1.0);
        EXPECT_LT(p, prev);
        EXPECT_GT(p, 0.0);
        prev = p;
    }
    EXPECT_GT(wald_pvalue(1e3, 1.0), 0.0);
}

TEST(WaldPvalue, ScaleInvariantAndRejectsBadSe)
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.01, 5.0);
    for (int r = 0; r < 100; ++r) {
        const double c = u(rng) - 2.5, s = u(rng), k = u(rng);
        EXPECT_NEAR(wald_pvalue(c, s), wald_pvalue(k * c, k * s), 1e-14);
    }
    for (const double se : {0.0, -1.0}) {
        try {
            wald_pvalue(1.0, se);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::NonPositiveSE);
        }
    }
}

namespace {

Dataset noise_dataset(std::mt19937_64& rng, int n, int p, int k, int planted_gene)
{
    std::normal_distribution<double> z;
    Dataset d;
    d.exposures = Matrix(n, p);
    d.mediators = Matrix(n, k);
    d.covariates = Matrix(n, 0);
    d.log_time = Vector(n);
    d.event = Eigen::VectorXi(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) d.exposures(i, j) = z(rng);
        for (int j = 0; j < k; ++j) d.mediators(i, j) = z(rng);
        const double t = (planted_gene >= 0 ? 1.0 * d.exposures(i, planted_gene) : 0.0) + z(rng);
        const double c = 0.8 + z(rng);
        d.log_time[i] = std::min(t, c);
        d.event[i] = t <= c;
    }
    d.fill_default_names();
    return d;
}

} // namespace

TEST(UnivariatePrescreen, KeepAllIsIdentity)
{
    std::mt19937_64 rng(8);
    const auto d = noise_dataset(rng, 50, 6, 4, 2);
    const auto out = univariate_prescreen(d, 6, 4);
    EXPECT_EQ(out.data.exposures, d.exposures);
    EXPECT_EQ(out.data.mediators, d.mediators);
    EXPECT_EQ(out.data.exposure_names, d.exposure_names);
}

TEST(UnivariatePrescreen, PlantedGeneRanksFirst)
{
    int first = 0;
    for (int seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(900 + seed);
        const int planted = seed % 20;
        const auto d = noise_dataset(rng, 300, 20, 3, planted);
        const auto out = univariate_prescreen(d, 1, 1);
        if (out.kept_exposures.front() == planted) ++first;
    }
    EXPECT_GE(first, 95);
}

TEST(UnivariatePrescreen, DeterministicAndOrderPreserving)
{
    std::mt19937_64 rng(9);
    const auto d = noise_dataset(rng, 80, 15, 10, 4);
    const auto a = univariate_prescreen(d, 5, 3);
    const auto b = univariate_prescreen(d, 5, 3);
    EXPECT_EQ(a.kept_exposures, b.kept_exposures);
    EXPECT_EQ(a.data.exposures, b.data.exposures);
    EXPECT_TRUE(std::is_sorted(a.kept_exposures.begin(), a.kept_exposures.end()));
    EXPECT_THROW(univariate_prescreen(d, 16, 3), Error);
}
