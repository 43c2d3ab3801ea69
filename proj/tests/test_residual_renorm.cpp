#include <cmath>

#include "doctest.h"

#include "grsd/error.hpp"
#include "grsd/experiments.hpp"
#include "grsd/residual_renorm.hpp"
#include "grsd/rng.hpp"

using namespace grsd;

TEST_CASE("epsilon = 0 chain is stationary")
{
    const auto stack = make_residual_stack(5, 20, 0.0, 1);
    const Vector u0 = Vector::Unit(5, 2);
    const auto tr = run_direction_chain(stack, u0, 19);
    CHECK(tr.increments.size() == 19);
    for (double d : tr.increments) CHECK(d == 0.0);
    for (const auto& u : tr.directions) CHECK((u - u0).norm() == 0.0);
    CHECK(tr.accumulated == 0.0);
}

TEST_CASE("scalar generators give log|1 + eps g|")
{
    std::vector<DenseMatrix> g{DenseMatrix::Constant(1, 1, 2.0), DenseMatrix::Constant(1, 1, -3.0)};
    const auto stack = make_residual_stack(g, 0.1);
    const auto tr = run_direction_chain(stack, Vector::Ones(1), 2, 0.05);
    CHECK(tr.increments[0] == doctest::Approx(std::log(1.2)));
    CHECK(tr.increments[1] == doctest::Approx(std::log(0.7)));
    CHECK(tr.accumulated == doctest::Approx(std::log(1.2) + std::log(0.7) - 0.1));
    CHECK(tr.directions[2](0) == doctest::Approx(1.0));
}

TEST_CASE("chain agrees with a naive recomputation over 1e4 layers")
{
    const int n = 8, L = 10000;
    const std::uint64_t seed = chain_member_seed(99, 0);
    const auto stack = make_residual_stack(n, L + 1, 0.1, seed);
    const Vector u0 = Vector::Unit(n, 0);
    const auto tr = run_direction_chain(stack, u0, L, 0.0, false);

    // independent loop straight off the generator stream
    Rng rng(seed);
    std::vector<double> u(n, 0.0), w(n);
    u[0] = 1.0;
    double sum = 0;
    for (int ell = 0; ell < L; ++ell) {
        std::vector<double> g(n * n);
        for (auto& x : g) x = rng.normal() / std::sqrt(double(n));
        double nrm2 = 0;
        for (int i = 0; i < n; ++i) {
            double acc = 0;
            for (int j = 0; j < n; ++j) acc += g[i * n + j] * u[j];
            w[i] = u[i] + 0.1 * acc;
            nrm2 += w[i] * w[i];
        }
        const double nrm = std::sqrt(nrm2);
        for (int i = 0; i < n; ++i) u[i] = w[i] / nrm;
        sum += std::log(nrm);
    }
    double mean = 0;
    for (double d : tr.increments) mean += d;
    mean /= L;
    CHECK(std::abs(mean - sum / L) <= 1e-12);
    CHECK(tr.accumulated == doctest::Approx(sum).epsilon(1e-10));

    // the streaming ensemble reads the same stream
    ChainEnsembleSpec spec;
    spec.n = n;
    spec.epsilon = 0.1;
    spec.members = 1;
    spec.depth = L;
    spec.seed = 99;
    const auto ens = run_chain_ensemble(spec);
    CHECK(std::abs(ens.sums[0] - sum) <= 1e-9);
    CHECK(ens.steps == L);
}

TEST_CASE("directions stay normalised")
{
    const auto stack = make_residual_stack(6, 2001, 0.5, 7);
    Vector u0 = Vector::Ones(6) / std::sqrt(6.0);
    const auto tr = run_direction_chain(stack, u0, 2000);
    for (const auto& u : tr.directions) CHECK(std::abs(u.norm() - 1.0) <= 1e-12);
    CHECK_THROWS_AS(run_direction_chain(stack, 2.0 * u0, 3), Error);
    CHECK_THROWS_AS(run_direction_chain(stack, u0, 2001), Error);
}

TEST_CASE("no normalisation drift over a million layers")
{
    const auto stack = make_residual_stack(3, 1000001, 0.3, 12);
    const auto tr = run_direction_chain(stack, Vector::Unit(3, 0), 1000000);
    double worst = 0;
    for (const auto& u : tr.directions) worst = std::max(worst, std::abs(u.norm() - 1.0));
    CHECK(worst <= 1e-12);
}

TEST_CASE("accumulated sum is exactly the centred increment sum")
{
    const auto stack = make_residual_stack(4, 101, 0.2, 3);
    const double mu = 0.013;
    const auto tr = run_direction_chain(stack, Vector::Unit(4, 1), 100, mu);
    double s = 0, sq = 0;
    for (double d : tr.increments) {
        s += d - mu;
        sq += d * d;
    }
    CHECK(tr.accumulated == s);
    double raw = 0;
    for (double d : tr.increments) raw += d;
    CHECK(tr.variance == doctest::Approx((sq - raw * raw / 100) / 99));
}

TEST_CASE("two-point law has KS distance Phi(1) - 1/2")
{
    std::vector<double> sums;
    for (int i = 0; i < 1000; ++i) sums.push_back(i % 2 ? 0.7 : -0.7);
    CHECK(berry_esseen_distance(sums) == doctest::Approx(standard_normal_cdf(1.0) - 0.5).epsilon(1e-12));
    CHECK(standard_normal_cdf(1.0) - 0.5 == doctest::Approx(0.3413).epsilon(1e-3));
    try {
        berry_esseen_distance(std::vector<double>(10, 1.0));
        FAIL("degenerate variance accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DegenerateVariance);
    }
}

TEST_CASE("KS distance of i.i.d. normals is inside the DKW band")
{
    Rng rng(31);
    std::vector<double> z(4096);
    for (auto& x : z) x = rng.normal();
    // P(KS > eps) <= 2 exp(-2 n eps^2); alpha = 1e-3
    const double band = std::sqrt(std::log(2.0 / 1e-3) / (2.0 * 4096));
    CHECK(ks_distance_to_normal(z) <= band);
    CHECK(berry_esseen_distance(z) <= band + 0.01);
    // single sample at the median
    CHECK(ks_distance_to_normal({0.0}) == doctest::Approx(0.5));
}

TEST_CASE("ensemble is independent of the thread count")
{
    ChainEnsembleSpec spec;
    spec.members = 64;
    spec.depth = 50;
    spec.seed = 5;
    const auto a = run_chain_ensemble(spec);
    spec.threads = 3;
    const auto b = run_chain_ensemble(spec);
    CHECK(a.sums == b.sums);
    CHECK(a.mean_increment == b.mean_increment);
    CHECK(a.increment_variance > 0);
}

TEST_CASE("depth threshold")
{
    const auto d = depth_threshold(0.1, 0.1);
    CHECK(d.branch_variance == doctest::Approx(10000.0));
    CHECK(d.branch_mixing == doctest::Approx(100.0 * std::log(10.0)));
    CHECK(d.branch_mixing == doctest::Approx(230.2585).epsilon(1e-6));
    CHECK(d.l_min == 10000);

    const auto half = depth_threshold(0.2, 0.1);
    CHECK(half.branch_variance == doctest::Approx(d.branch_variance / 4));
    CHECK(half.branch_mixing == doctest::Approx(d.branch_mixing / 4));

    const auto near_one = depth_threshold(0.1, 1.0 - 1e-9);
    CHECK(near_one.branch_mixing < 1e-6);
    CHECK(near_one.branch_variance == doctest::Approx(100.0));
    CHECK(near_one.l_min == 101);  // 100 (1 + 2e-9) rounds up

    for (double bad : {0.0, 1.0, 1.5, -0.1}) {
        try {
            depth_threshold(0.1, bad);
            FAIL("eta accepted");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::InvalidTolerance);
        }
    }
}

TEST_CASE("mixing from a point start and from the uniform law")
{
    MixingSpec spec;
    spec.n = 8;
    spec.members = 4096;
    spec.max_layers = 1;
    spec.uniform_start = true;
    spec.seed = 8;
    const auto u = mixing_time(spec, 0.1);
    CHECK(u.distance.front() < 0.05);
    CHECK(u.tau == 0);

    MixingSpec frozen;
    frozen.n = 4;
    frozen.members = 64;
    frozen.epsilon = 0.0;
    frozen.max_layers = 50;
    const auto f = mixing_time(frozen, 0.1);
    CHECK_FALSE(f.mixed);
    CHECK(f.distance.size() == 51);
    for (double d : f.distance) CHECK(d == doctest::Approx(std::sqrt(1.0 - 1.0 / 4)));

    MixingSpec live;
    live.n = 4;
    live.members = 512;
    live.epsilon = 0.5;
    live.max_layers = 2000;
    const auto m = mixing_time(live, 0.2);
    REQUIRE(m.mixed);
    CHECK(*m.tau > 0);
    CHECK(m.distance[*m.tau] <= 0.2);
    CHECK(m.distance[*m.tau - 1] > 0.2);
    CHECK(m.c2_estimate == doctest::Approx(*m.tau * 0.25 / std::log(5.0)));
}

TEST_CASE("second moment distance")
{
    DenseMatrix iso = DenseMatrix::Identity(4, 4);  // the four coordinate axes: S = I/4
    CHECK(second_moment_distance(iso) == doctest::Approx(0.0).scale(1.0));
    DenseMatrix point = DenseMatrix::Zero(3, 4);
    point.col(0).setOnes();
    CHECK(second_moment_distance(point) == doctest::Approx(std::sqrt(0.75)));
}

namespace {

LogShiftReport report_for(const SymmetricEigenSystem& eig, const DenseMatrix& a, const LogBinGrid& g)
{
    LogShiftOptions opt;
    opt.statistic = CouplingStatistic::LinearMean;
    opt.exclude_self_pairs = false;
    return log_bin_couplings(eig, a, g, opt);
}

}  // namespace

TEST_CASE("depth averaging of layer couplings")
{
    Rng rng(41);
    const int n = 30;
    SymmetricEigenSystem eig{Vector(n), random_orthogonal(rng, n)};
    for (int i = 0; i < n; ++i) eig.eigenvalues(i) = std::exp(-2.0 + 4.0 * (i + 0.5) / n);
    const LogBinGrid g(-2.0, 0.5, 8, 1);
    std::vector<DenseMatrix> layers;
    std::vector<LogShiftReport> reps;
    DenseMatrix total = DenseMatrix::Zero(n, n);
    for (int l = 0; l < 5; ++l) {
        const DenseMatrix b = gaussian_matrix(rng, n, 4, 1.0);
        layers.push_back(b * b.transpose());
        total += layers.back();
        reps.push_back(report_for(eig, layers.back(), g));
    }
    const auto assembled = report_for(eig, total, g);

    SUBCASE("two-layer additivity")
    {
        const DenseMatrix two = layers[0] + layers[1];
        const auto r2 = report_for(eig, two, g);
        const auto d = depth_average_dilution(std::span(reps).first(2), 1, &r2);
        CHECK(d.additivity_discrepancy <= 1e-12);
        CHECK((d.combined - 0.5 * r2.couplings).cwiseAbs().maxCoeff() <= 1e-12 * r2.couplings.cwiseAbs().maxCoeff());
    }
    SUBCASE("no boundary layers")
    {
        const auto d = depth_average_dilution(reps, 0, &assembled);
        CHECK(d.boundary.cwiseAbs().maxCoeff() == 0.0);
        CHECK(d.boundary_contribution == 0.0);
        CHECK(d.boundary_bound == 0.0);
        CHECK((d.bulk - d.combined).cwiseAbs().maxCoeff() == 0.0);
        CHECK(d.additivity_discrepancy <= 1e-12);
    }
    SUBCASE("boundary bound")
    {
        const auto d = depth_average_dilution(reps, 2);
        double ck = 0;
        for (int l = 0; l < 2; ++l) ck = std::max(ck, reps[l].couplings.cwiseAbs().maxCoeff());
        CHECK(d.coupling_bound == doctest::Approx(ck));
        CHECK(d.boundary_bound == doctest::Approx(ck * 2 / 5));
        CHECK(d.boundary_contribution <= d.boundary_bound * (1 + 1e-12));
        CHECK((d.bulk + d.boundary - d.combined).cwiseAbs().maxCoeff() <= 1e-14 * ck);
    }
    CHECK_THROWS_AS(depth_average_dilution(reps, 5), Error);
    std::vector<LogShiftReport> mixed{reps[0], report_for(eig, layers[1], g.shifted(0.1))};
    CHECK_THROWS_AS(depth_average_dilution(mixed, 0), Error);
}
