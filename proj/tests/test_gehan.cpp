#include <smahp/gehan.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace smahp;

namespace {

// Independent oracle: literal double sum over all (i, j) pairs.
double brute_gehan(const Vector& theta, const GehanProblem& p)
{
    const auto n = p.n();
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const double f = p.log_time[i] - p.log_time[j] - (p.design.row(i) - p.design.row(j)).dot(theta);
            s += p.event[i] / p.scale_b * std::max(-f, 0.0);
        }
    return s / static_cast<double>(n * n);
}

GehanProblem random_problem(std::mt19937_64& rng, int n, int d, double censor = 0.3)
{
    std::normal_distribution<double> z;
    std::bernoulli_distribution cens(censor);
    GehanProblem p;
    p.design = Matrix(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) p.design(i, j) = z(rng);
    p.log_time = Vector(n);
    p.event = Eigen::VectorXi(n);
    for (int i = 0; i < n; ++i) {
        p.log_time[i] = 0.7 * p.design(i, 0) + z(rng);
        p.event[i] = cens(rng) ? 0 : 1;
    }
    p.event[0] = 1;
    return p;
}

// 1-D / 2-D grid minimizer of the exact loss.
Vector grid_argmin(const GehanProblem& p, double lo, double hi, double step)
{
    const int m = static_cast<int>(std::round((hi - lo) / step));
    Vector best = Vector::Zero(p.d());
    double best_v = std::numeric_limits<double>::infinity();
    if (p.d() == 1) {
        for (int a = 0; a <= m; ++a) {
            Vector th(1);
            th << lo + a * step;
            const double v = brute_gehan(th, p);
            if (v < best_v) best_v = v, best = th;
        }
    } else {
        for (int a = 0; a <= m; ++a)
            for (int b = 0; b <= m; ++b) {
                Vector th(2);
                th << lo + a * step, lo + b * step;
                const double v = brute_gehan(th, p);
                if (v < best_v) best_v = v, best = th;
            }
    }
    return best;
}

PenaltySpec enet(double gamma = 0.5)
{
    PenaltySpec s;
    s.family = PenaltyFamily::elastic_net;
    s.gamma = gamma;
    return s;
}

} // namespace

TEST(GehanLoss, ZeroWhenAllTimesEqual)
{
    GehanProblem p;
    p.design = Matrix::Random(6, 2);
    p.log_time = Vector::Constant(6, 1.3);
    p.event = Eigen::VectorXi::Ones(6);
    EXPECT_DOUBLE_EQ(gehan_loss(Vector::Zero(2), p), 0.0);
}

TEST(GehanLoss, ThreePointInstanceMatchesDoubleSum)
{
    GehanProblem p;
    p.design = Matrix(3, 1);
    p.design << 0.5, -0.3, 0.1;
    p.log_time = Vector(3);
    p.log_time << 1.0, 0.2, -0.5;
    p.event = Eigen::VectorXi(3);
    p.event << 1, 1, 0;
    Vector th(1);
    th << 0.4;
    // hand enumeration: residuals e = (0.8, 0.32, -0.54); event rows 1 and 2
    // row 1: no e_j > 0.8 -> 0; row 2: e_1 - e_2 = 0.48 -> total 0.48 / 9
    const double expected = 0.48 / 9.0;
    EXPECT_NEAR(brute_gehan(th, p), expected, 1e-15);
    EXPECT_NEAR(gehan_loss(th, p), expected, 1e-15);
}

TEST(GehanLoss, MatchesBruteForceOnRandomProblems)
{
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        auto p = random_problem(rng, 15 + rep, 3);
        if (rep % 3 == 0) p.log_time[2] = p.log_time[3];  // ties
        const Vector th = Vector::Random(3);
        EXPECT_NEAR(gehan_loss(th, p), brute_gehan(th, p), 1e-12);
    }
}

TEST(GehanLoss, InvariantToShiftingLogTimes)
{
    std::mt19937_64 rng(3);
    auto p = random_problem(rng, 30, 2);
    const Vector th = Vector::Random(2);
    const double base = gehan_loss(th, p);
    p.log_time.array() += 17.25;
    EXPECT_NEAR(gehan_loss(th, p), base, 1e-12);
}

TEST(GehanLoss, DimensionMismatchThrows)
{
    std::mt19937_64 rng(3);
    auto p = random_problem(rng, 10, 2);
    try {
        gehan_loss(Vector::Zero(3), p);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
    }
}

TEST(GehanLoss, ConvexAlongRandomSegments)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 200; ++rep) {
        auto p = random_problem(rng, 12, 2);
        const Vector a = 2.0 * Vector::Random(2), b = 2.0 * Vector::Random(2);
        const double t = u(rng);
        const double lhs = gehan_loss(t * a + (1 - t) * b, p);
        EXPECT_LE(lhs, t * gehan_loss(a, p) + (1 - t) * gehan_loss(b, p) + 1e-9);
    }
}

TEST(GehanLoss, ScaleBDividesLossAndKeepsArgmin)
{
    std::mt19937_64 rng(8);
    auto p = random_problem(rng, 20, 1);
    const Vector ref = grid_argmin(p, -3, 3, 0.01);
    const double base = gehan_loss(ref, p);
    for (double b : {0.5, 2.0}) {
        auto q = p;
        q.scale_b = b;
        EXPECT_NEAR(gehan_loss(ref, q), base / b, 1e-12);
        EXPECT_DOUBLE_EQ(grid_argmin(q, -3, 3, 0.01)[0], ref[0]);
    }
}

TEST(PenaltyValue, Examples)
{
    const Vector zero = Vector::Zero(2);
    for (auto f : {PenaltyFamily::elastic_net, PenaltyFamily::lasso, PenaltyFamily::ridge,
                   PenaltyFamily::sparse_group_lasso}) {
        PenaltySpec s;
        s.family = f;
        EXPECT_EQ(penalty_value(zero, s), 0.0);
    }
    Vector th(2);
    th << 1, -2;
    EXPECT_DOUBLE_EQ(penalty_value(th, enet(1.0)), 3.0);

    PenaltySpec sgl;
    sgl.family = PenaltyFamily::sparse_group_lasso;
    sgl.gamma = 0.5;
    sgl.groups = {{0, 1}};
    sgl.group_weights = Vector::Ones(1);
    th << 3, 4;
    EXPECT_DOUBLE_EQ(penalty_value(th, sgl), 0.5 * 7 + 0.5 * 5);

    PenaltySpec ridge;
    ridge.family = PenaltyFamily::ridge;
    ridge.gamma = 0.9;  // ignored: ridge is gamma = 0
    EXPECT_DOUBLE_EQ(penalty_value(th, ridge), 0.5 * 25);
}

TEST(PenaltySpec, GroupsMustPartition)
{
    PenaltySpec s;
    s.family = PenaltyFamily::sparse_group_lasso;
    s.groups = {{0}, {0, 1}};
    EXPECT_THROW(s.validate(2), Error);
    s.groups = {{0}};
    EXPECT_THROW(s.validate(2), Error);
    s.groups = {{1}, {0}};
    EXPECT_NO_THROW(s.validate(2));
}

TEST(PenalizedGehan, ZeroAtLambdaMax)
{
    std::mt19937_64 rng(21);
    for (auto family : {PenaltyFamily::elastic_net, PenaltyFamily::lasso, PenaltyFamily::sparse_group_lasso}) {
        auto p = random_problem(rng, 40, 5);
        PenaltySpec s = enet();
        s.family = family;
        if (family == PenaltyFamily::sparse_group_lasso) s.groups = {{0, 1}, {2, 3, 4}};
        const auto path = gehan_default_path(p, s, 10);
        const auto fits = fit_penalized_gehan(p, s, path);
        EXPECT_EQ(fits.front().coefficients.cwiseAbs().maxCoeff(), 0.0);
        // just below lambda_max something enters
        const auto below = fit_penalized_gehan(p, s, LambdaPath::single(path.max() * 0.9));
        EXPECT_GT(below.front().coefficients.cwiseAbs().maxCoeff(), 0.0);
        // path ends strictly decreasing
        for (std::size_t i = 1; i < path.size(); ++i) EXPECT_LT(path.values[i], path.values[i - 1]);
        EXPECT_NEAR(path.values.back(), path.max() * 0.01, 1e-15 * path.max());
    }
}

TEST(PenalizedGehan, UnpenalizedMatchesGridSearch1D)
{
    std::mt19937_64 rng(31);
    for (int rep = 0; rep < 5; ++rep) {
        auto p = random_problem(rng, 5, 1, 0.2);
        const Vector oracle = grid_argmin(p, -5, 5, 1e-4);
        const auto fit = fit_penalized_gehan(p, enet(), LambdaPath::single(0.0));
        EXPECT_NEAR(fit.front().coefficients[0], oracle[0], 1e-3) << "rep " << rep;
    }
}

// Exact oracle for d = 2: a convex piecewise-linear function attains its minimum at a
// vertex, i.e. the intersection of two kink lines (Phi_i - Phi_j)' theta = log t_i - log t_j.
std::pair<Vector, double> vertex_argmin(const GehanProblem& p, double* runner_up)
{
    std::vector<std::pair<Eigen::Vector2d, double>> lines;
    for (Eigen::Index i = 0; i < p.n(); ++i)
        for (Eigen::Index j = i + 1; j < p.n(); ++j)
            lines.push_back({(p.design.row(i) - p.design.row(j)).transpose(), p.log_time[i] - p.log_time[j]});
    Vector best = Vector::Zero(2);
    double best_v = brute_gehan(best, p), second = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < lines.size(); ++a)
        for (std::size_t b = a + 1; b < lines.size(); ++b) {
            Eigen::Matrix2d A;
            A.row(0) = lines[a].first.transpose();
            A.row(1) = lines[b].first.transpose();
            if (std::abs(A.determinant()) < 1e-12) continue;
            const Vector th = A.inverse() * Eigen::Vector2d(lines[a].second, lines[b].second);
            const double v = brute_gehan(th, p);
            if (v < best_v - 1e-14) {
                if ((th - best).norm() > 1e-9) second = best_v;
                best_v = v, best = th;
            } else if (v < second && (th - best).norm() > 1e-9) {
                second = v;
            }
        }
    if (runner_up) *runner_up = second;
    return {best, best_v};
}

TEST(PenalizedGehan, UnpenalizedMatchesGridSearch2D)
{
    std::mt19937_64 rng(41);
    for (int rep = 0; rep < 3; ++rep) {
        auto p = random_problem(rng, 12, 2, 0.2);
        // two-level grid search: 0.01 over [-3,3]^2, then 1e-4 within +-0.03 of the coarse winner
        const Vector coarse = grid_argmin(p, -3, 3, 0.01);
        Vector grid = coarse;
        double grid_v = brute_gehan(coarse, p);
        for (int a = -300; a <= 300; ++a)
            for (int b = -300; b <= 300; ++b) {
                Vector th(2);
                th << coarse[0] + a * 1e-4, coarse[1] + b * 1e-4;
                const double v = brute_gehan(th, p);
                if (v < grid_v) grid_v = v, grid = th;
            }
        double runner_up = 0.0;
        const auto [vertex, vertex_v] = vertex_argmin(p, &runner_up);
        EXPECT_NEAR(grid[0], vertex[0], 1e-3);
        EXPECT_NEAR(grid[1], vertex[1], 1e-3);
        const auto fit = fit_penalized_gehan(p, enet(), LambdaPath::single(0.0));
        EXPECT_NEAR(fit.front().coefficients[0], vertex[0], 1e-3) << "rep " << rep;
        EXPECT_NEAR(fit.front().coefficients[1], vertex[1], 1e-3) << "rep " << rep;
        EXPECT_NEAR(fit.front().coefficients[0], grid[0], 1e-3);
        EXPECT_NEAR(fit.front().coefficients[1], grid[1], 1e-3);
        EXPECT_LE(gehan_loss(fit.front().coefficients, p), vertex_v + 1e-6);
    }
}

TEST(PenalizedGehan, RecoversSlopeOfMonotoneRelation)
{
    std::mt19937_64 rng(51);
    std::normal_distribution<double> z;
    GehanProblem p;
    const int n = 60;
    p.design = Matrix(n, 1);
    p.log_time = Vector(n);
    p.event = Eigen::VectorXi::Ones(n);
    for (int i = 0; i < n; ++i) {
        p.design(i, 0) = z(rng);
        p.log_time[i] = 2.0 * p.design(i, 0);
    }
    const auto fit = fit_penalized_gehan(p, enet(), LambdaPath::single(1e-6));
    EXPECT_NEAR(fit.front().coefficients[0], 2.0, 0.2);
}

TEST(PenalizedGehan, ObjectiveNonIncreasingWithinStages)
{
    std::mt19937_64 rng(61);
    auto p = random_problem(rng, 80, 10);
    std::vector<std::vector<double>> trace;
    GehanSolverOptions opt;
    opt.trace = &trace;
    PenaltySpec s = enet();
    const double lmax = gehan_lambda_max(p, s, opt);
    fit_penalized_gehan(p, s, LambdaPath::single(0.1 * lmax), opt);
    ASSERT_EQ(trace.size(), opt.smoothing.size());
    for (const auto& stage : trace)
        for (std::size_t i = 1; i < stage.size(); ++i) EXPECT_LE(stage[i], stage[i - 1] + 1e-10);
}

TEST(PenalizedGehan, RidgeCornerHasNoExactZeros)
{
    std::mt19937_64 rng(71);
    auto p = random_problem(rng, 50, 4);
    PenaltySpec s;
    s.family = PenaltyFamily::ridge;
    const auto fit = fit_penalized_gehan(p, s, LambdaPath::single(0.01));
    EXPECT_GT(fit.front().coefficients.cwiseAbs().minCoeff(), 0.0);
}

TEST(CvSelectLambda, SingleCandidateReturned)
{
    std::mt19937_64 rng(81);
    auto p = random_problem(rng, 30, 3);
    const auto cv = cv_select_lambda(p, enet(), LambdaPath::single(0.05), 5, 1);
    EXPECT_EQ(cv.lambda_opt, 0.05);
}

TEST(CvSelectLambda, DeterministicUnderSeed)
{
    std::mt19937_64 rng(91);
    auto p = random_problem(rng, 60, 5);
    const auto path = gehan_default_path(p, enet(), 15);
    const auto a = cv_select_lambda(p, enet(), path, 5, 42);
    const auto b = cv_select_lambda(p, enet(), path, 5, 42);
    EXPECT_EQ(a.lambda_opt, b.lambda_opt);
    EXPECT_EQ(a.fit.coefficients, b.fit.coefficients);
}

TEST(CvSelectLambda, PureNoiseSelectsSparseModels)
{
    // truth: no feature is related to the outcome
    int sparse_reps = 0;
    const int reps = 50;
    for (int rep = 0; rep < reps; ++rep) {
        std::mt19937_64 rng(1000 + rep);
        std::normal_distribution<double> z;
        std::bernoulli_distribution cens(0.25);
        GehanProblem p;
        p.design = Matrix(100, 10);
        p.log_time = Vector(100);
        p.event = Eigen::VectorXi(100);
        for (int i = 0; i < 100; ++i) {
            for (int j = 0; j < 10; ++j) p.design(i, j) = z(rng);
            p.log_time[i] = z(rng);
            p.event[i] = cens(rng) ? 0 : 1;
        }
        const auto path = gehan_default_path(p, enet());
        const auto cv = cv_select_lambda(p, enet(), path, 5, static_cast<std::uint64_t>(rep));
        if (cv.fit.active().size() <= 2) ++sparse_reps;
    }
    EXPECT_GE(sparse_reps, static_cast<int>(0.8 * reps));
}

TEST(CvSelectLambda, AllCensoredTrainingSplitIsAnError)
{
    GehanProblem p;
    p.design = Matrix::Random(10, 1);
    p.log_time = Vector::LinSpaced(10, 0, 1);
    p.event = Eigen::VectorXi::Zero(10);
    p.event[0] = 1;
    // with one event, some training split (the fold holding it) has none
    const auto path = LambdaPath::log_spaced(1.0, 3);
    try {
        cv_select_lambda(p, enet(), path, 5, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::AllCensoredFold);
    }
}
