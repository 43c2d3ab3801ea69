#include <cmath>
#include <sstream>

#include "doctest.h"

#include "grsd/error.hpp"
#include "grsd/experiments.hpp"
#include "grsd/rng.hpp"
#include "grsd/shell_dynamics.hpp"

using namespace grsd;

namespace {

std::vector<VelocitySample> power_samples(double c, double a, double s_lo, double s_hi, int count)
{
    std::vector<VelocitySample> out;
    for (int i = 0; i < count; ++i) {
        const double lam = std::exp(s_lo + (s_hi - s_lo) * (i + 0.5) / count);
        out.push_back({lam, c * std::pow(lam, a)});
    }
    return out;
}

// whole grid is the window apart from the margins
LogBinGrid fit_window(double s_lo, double s_hi) { return LogBinGrid(s_lo - 0.2, (s_hi - s_lo + 0.4) / 10, 14, 2).shifted(-0.2 * 4 / 10); }

}  // namespace

TEST_CASE("shell energies satisfy Parseval")
{
    Rng rng(4);
    const DenseMatrix b = gaussian_matrix(rng, 20, 14, 1.0);
    const auto eig = clamp_psd(symmetric_eigendecompose(b * b.transpose()));
    const Vector e = gaussian_vector(rng, 20, 1.0);
    const auto s = log_eigenvalues(eig, default_eigen_floor(eig));
    const auto g = LogBinGrid::from_quantiles(s, 4, 0.2);
    const auto sh = shell_energies(eig, e, g);
    double sum = sh.excluded;
    for (double x : sh.energy) sum += x;
    CHECK(sum == doctest::Approx(sh.total).epsilon(1e-12));
    CHECK(sh.total == doctest::Approx(e.squaredNorm()));
    CHECK(sh.excluded > 0);  // the 6 null directions and the tails
    CHECK_THROWS_AS(shell_energies(eig, Vector::Ones(3), g), Error);
}

TEST_CASE("time derivative is exact on quadratics with uneven spacing")
{
    const std::vector<double> t{0.0, 0.1, 0.25, 0.3, 0.7};
    std::vector<std::vector<double>> v;
    for (double x : t) v.push_back({x * x, 3 * x - 1});
    const auto d = time_derivative(t, v);
    for (std::size_t i = 0; i < t.size(); ++i) {
        CHECK(d[i][0] == doctest::Approx(2 * t[i]).epsilon(1e-12));
        CHECK(d[i][1] == doctest::Approx(3.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(time_derivative({0.0, 1.0}, {{1.0}, {2.0}}), Error);
}

TEST_CASE("single source telescopes through the intermediate edges")
{
    // top shell drains at unit rate into the bottom one
    const LogBinGrid g(0.0, 0.5, 8, 1);
    std::vector<double> times;
    std::vector<std::vector<double>> e;
    for (int i = 0; i < 5; ++i) {
        const double t = 0.1 * i;
        times.push_back(t);
        std::vector<double> row(8, 1.0);
        row[7] = 1.0 - t;
        row[0] = 1.0 + t;
        e.push_back(row);
    }
    const ShellEnergySeries series(g, times, e);
    const auto flux = invert_boundary_fluxes(series, DissipationModel::zero());
    for (std::size_t i = 0; i < times.size(); ++i) {
        CHECK(flux.flux_lower[i][0] == doctest::Approx(0.0).scale(1.0));
        for (int a = 1; a < 8; ++a) CHECK(flux.flux_lower[i][a] == doctest::Approx(-1.0).epsilon(1e-12));
        CHECK(flux.flux_upper(i, 7) == 0.0);
    }
    CHECK(flux.balance_residual(0, 7) < 1e-12);
    CHECK(flux.max_abs_rate() == doctest::Approx(1.0));
}

TEST_CASE("flux inversion reassembles the input derivatives")
{
    Rng rng(10);
    const LogBinGrid g(-1.0, 0.25, 9, 2);
    std::vector<double> times;
    std::vector<std::vector<double>> e;
    for (int i = 0; i < 6; ++i) {
        times.push_back(0.05 * i + 0.01 * (i % 2));
        std::vector<double> row;
        for (int a = 0; a < 9; ++a) row.push_back(1.0 + 0.1 * rng.uniform());
        e.push_back(row);
    }
    for (auto model : {DissipationModel::zero(), DissipationModel::linear(0.3)}) {
        const auto flux = invert_boundary_fluxes(ShellEnergySeries(g, times, e, 1.0), model);
        CHECK(flux.balance_residual(0, 8) < 1e-10);
        CHECK(flux.dissipation[2][4] == doctest::Approx(model(e[2][4])));
    }
    CHECK(DissipationModel::linear(0.3).name() == "linear(0.29999999999999999)");
    CHECK_THROWS_AS(DissipationModel::linear(-1.0), Error);
}

TEST_CASE("energy series validation")
{
    const LogBinGrid g(0.0, 1.0, 5, 1);
    CHECK_THROWS_AS(ShellEnergySeries(g, {0.0, 0.0}, {std::vector<double>(5, 1.0), std::vector<double>(5, 1.0)}), Error);
    CHECK_THROWS_AS(ShellEnergySeries(g, {0.0}, {std::vector<double>(4, 1.0)}), Error);
    CHECK_THROWS_AS(ShellEnergySeries(g, {0.0}, {std::vector<double>{1, 1, -1, 1, 1}}), Error);
    // totals 5 then 1: a jump larger than half the largest total
    CHECK_THROWS_AS(ShellEnergySeries(g, {0.0, 1.0}, {std::vector<double>(5, 1.0), std::vector<double>(5, 0.2)}), Error);
    const ShellEnergySeries two(g, {0.0, 1.0}, {std::vector<double>(5, 1.0), std::vector<double>(5, 1.0)});
    CHECK_THROWS_AS(invert_boundary_fluxes(two, DissipationModel::zero()), Error);
}

TEST_CASE("uniform density and flux give uniform velocity")
{
    const LogBinGrid g(0.0, 0.3, 7, 1);
    std::vector<double> times{0.0, 0.1, 0.2};
    std::vector<std::vector<double>> e;
    for (int i = 0; i < 3; ++i) {
        std::vector<double> row;
        for (int a = 0; a < 7; ++a) row.push_back(g.width_lambda(a));  // density 1
        e.push_back(row);
    }
    const ShellEnergySeries series(g, times, e);
    ShellFluxSeries flux;
    flux.times = times;
    flux.flux_lower.assign(3, std::vector<double>(7, 2.0));
    const auto v = velocity_field(flux, series);
    for (int i = 0; i < 3; ++i)
        for (int a = 0; a < 6; ++a) CHECK(v.v[i][a] == doctest::Approx(2.0));

    flux.flux_lower.assign(3, std::vector<double>(7, 0.0));
    const auto z = velocity_field(flux, series);
    for (int a = 0; a < 7; ++a) CHECK(z.v[1][a] == 0.0);
}

TEST_CASE("empty shells leave the velocity undefined")
{
    const LogBinGrid g(0.0, 0.3, 5, 1);
    std::vector<std::vector<double>> e(3, std::vector<double>{0.0, 1.0, 1.0, 0.0, 1.0});
    const ShellEnergySeries series(g, {0.0, 0.1, 0.2}, e);
    const auto flux = invert_boundary_fluxes(series, DissipationModel::zero());
    const auto v = velocity_field(flux, series);
    CHECK_FALSE(v.defined[1][0]);
    CHECK(std::isnan(v.v[1][3]));
    CHECK(v.defined[1][2]);
    const ShellEnergySeries dead(g, {0.0, 0.1, 0.2}, std::vector<std::vector<double>>(3, std::vector<double>(5, 0.0)));
    try {
        velocity_field(invert_boundary_fluxes(dead, DissipationModel::zero()), dead);
        FAIL("all-empty series accepted");
    } catch (const Error& e2) {
        CHECK(e2.kind() == ErrorKind::AllBinsBelowFloor);
    }
}

TEST_CASE("manufactured transport v = 3 lambda^0.5 is recovered to 5 percent")
{
    TransportSpec spec;
    spec.exponent = 0.5;
    spec.coefficient = 3.0;
    const auto run = run_manufactured_transport(spec);
    int checked = 0;
    for (std::size_t i = 0; i < run.field.times.size(); ++i)
        for (int a = run.window.window_lo(); a <= run.window.window_hi(); ++a) {
            if (!run.field.defined[i][a]) continue;
            const double exact = 3.0 * std::sqrt(run.field.lambda[a]);
            CHECK(std::abs(run.field.v[i][a] - exact) <= 0.05 * exact);
            ++checked;
        }
    CHECK(checked > 20);
    CHECK(run.fit.exponent == doctest::Approx(0.5).epsilon(0.02));
    CHECK(run.balance_residual <= 1e-8 * run.max_rate);
}

TEST_CASE("power-law fits")
{
    SUBCASE("exact 3 lambda^2")
    {
        const auto s = power_samples(3.0, 2.0, -1.0, 1.0, 10);
        const auto f = fit_power_law(s, fit_window(-1.0, 1.0));
        CHECK(f.exponent == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(f.coefficient.at(0) == doctest::Approx(3.0).epsilon(1e-12));
        CHECK(f.r2 == doctest::Approx(1.0));
        for (double r : f.residuals) CHECK(std::abs(r) <= 1e-12);
    }
    SUBCASE("constant")
    {
        const auto f = fit_power_law(power_samples(5.0, 0.0, -1.0, 1.0, 10), fit_window(-1.0, 1.0));
        CHECK(f.exponent == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
        CHECK(f.coefficient.at(0) == doctest::Approx(5.0));
    }
    SUBCASE("one percent noise")
    {
        Rng rng(77);
        auto s = power_samples(2.0, 0.7, -2.0, 2.0, 50);
        for (auto& x : s) x.v *= 1.0 + 0.01 * rng.normal();
        const auto f = fit_power_law(s, fit_window(-2.0, 2.0));
        CHECK(std::abs(f.exponent - 0.7) <= 0.02);
    }
    SUBCASE("negative velocities keep their sign")
    {
        auto s = power_samples(-2.0, 1.0, -1.0, 1.0, 8);
        const auto f = fit_power_law(s, fit_window(-1.0, 1.0));
        CHECK(f.sign == -1.0);
        CHECK(f.coefficient.at(0) == doctest::Approx(2.0));
        s[3].v = -s[3].v;
        try {
            fit_power_law(s, fit_window(-1.0, 1.0));
            FAIL("mixed signs accepted");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::MixedSignVelocities);
        }
    }
    SUBCASE("too few samples")
    {
        try {
            fit_power_law(power_samples(1.0, 1.0, -1.0, 1.0, 2), fit_window(-1.0, 1.0));
            FAIL("two samples accepted");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::InsufficientSamples);
        }
    }
}

TEST_CASE("power-law fit equivariance")
{
    Rng rng(5);
    auto s = power_samples(1.5, -0.8, -1.0, 1.0, 20);
    for (auto& x : s) x.v *= std::exp(0.05 * rng.normal());
    const auto w = fit_window(-1.0, 1.0);
    const auto base = fit_power_law(s, w);

    const double b = 2.5;
    auto scaled_v = s;
    for (auto& x : scaled_v) x.v *= b;
    const auto fv = fit_power_law(scaled_v, w);
    CHECK(fv.exponent == doctest::Approx(base.exponent).epsilon(1e-12));
    CHECK(fv.coefficient[0] == doctest::Approx(b * base.coefficient[0]).epsilon(1e-12));

    auto scaled_l = s;
    for (auto& x : scaled_l) x.lambda *= b;
    const auto fl = fit_power_law(scaled_l, w.shifted(std::log(b)));
    CHECK(fl.exponent == doctest::Approx(base.exponent).epsilon(1e-12));
    CHECK(fl.coefficient[0] == doctest::Approx(base.coefficient[0] * std::pow(b, -base.exponent)).epsilon(1e-12));
}

TEST_CASE("sign-split fits")
{
    std::vector<VelocitySample> s;
    for (int i = 0; i < 12; ++i) {
        const double lam = std::exp(-1.0 + i * (2.0 / 12) + 1.0 / 12);
        s.push_back({lam, (i < 6 ? 1.0 : -2.0) * lam});
    }
    const auto fits = fit_power_law_by_sign(s, fit_window(-1.0, 1.0));
    REQUIRE(fits.size() == 2);
    CHECK(fits[0].sign == 1.0);
    CHECK(fits[1].sign == -1.0);
    CHECK(fits[1].exponent == doctest::Approx(1.0));
    CHECK(fits[1].coefficient[0] == doctest::Approx(2.0));
}

TEST_CASE("fit JSON record")
{
    const auto f = fit_power_law(power_samples(3.0, 2.0, -1.0, 1.0, 10), fit_window(-1.0, 1.0));
    const auto j = nlohmann::json::parse(to_json(f));
    CHECK(j.at("a").get<double>() == doctest::Approx(2.0));
    CHECK(j.at("c_series").size() == 1);
    CHECK(j.at("dissipation_model") == "zero");
    CHECK(j.at("window").contains("lambda_lo"));
}

TEST_CASE("rigidity of exact power laws")
{
    const auto s = linspace(-2.0, 2.0, 41);
    const std::vector<double> shifts{-0.5, -0.2, 0.3, 0.5};
    const auto f = power_law_field(2.0, 0.7, s, {1.0});
    const auto r = log_shift_rigidity_test(f, shifts, 1.0);
    CHECK(r.score <= 1e-6);
    CHECK(r.fitted_exponent == doctest::Approx(0.7));
    CHECK(r.comparisons > 0);

    auto moved = f;
    for (auto& x : moved.s) x += 3.25;  // relabelled origin
    const auto rm = log_shift_rigidity_test(moved, shifts, 1.0);
    CHECK(rm.score == doctest::Approx(r.score).scale(1.0).epsilon(1e-12));
    CHECK(rm.fitted_exponent == doctest::Approx(r.fitted_exponent).epsilon(1e-12));
}

TEST_CASE("additive spectral scale breaks rigidity")
{
    const auto s = linspace(-2.0, 2.0, 41);
    const auto f = power_law_field(1.0, 1.0, s, {1.0}, 1.0);  // lambda_0 = median lambda = e^0
    const auto r = log_shift_rigidity_test(f, std::vector<double>{-0.5, 0.5}, 1.0);
    CHECK(r.score >= 0.1);
}

TEST_CASE("time-dependent reference (lambda/t)^a")
{
    // v(s + tau, t) / v(s, e^{k tau} t) = e^{a (1 + k) tau}: a pure exponential
    // in tau for every k, so the fitted exponent absorbs the mismatch.
    const double a = 0.6;
    const auto s = linspace(-2.0, 2.0, 41);
    const auto t = std::vector<double>{0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
    SampledField f{s, t, {}};
    for (double ti : t) {
        std::vector<double> row;
        for (double si : s) row.push_back(std::pow(std::exp(si) / ti, a));
        f.values.push_back(row);
    }
    const std::vector<double> shifts{-0.4, 0.4};
    for (double k : {-1.0, 0.0, 1.0}) {
        const auto r = log_shift_rigidity_test(f, shifts, k);
        CHECK(r.score <= 1e-3);
        CHECK(r.fitted_exponent == doctest::Approx(a * (1 + k)).scale(1.0).epsilon(1e-9));
    }
    try {
        log_shift_rigidity_test(f, std::vector<double>{10.0}, 1.0);
        FAIL("out-of-range shift accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::RangeExceeded);
    }
}

TEST_CASE("shell CSV layout")
{
    TransportSpec spec;
    spec.s_lo = -3.0;
    spec.s_hi = 3.0;
    spec.window_half_width = 1.5;
    const auto run = run_manufactured_transport(spec);
    std::ostringstream os;
    write_shell_csv(os, run.series, run.flux, run.field);
    const std::string csv = os.str();
    CHECK(csv.rfind("t,alpha,lambda_center,E,eps,F_lower,D,v\n", 0) == 0);
    const auto rows = std::count(csv.begin(), csv.end(), '\n') - 1;
    CHECK(rows == static_cast<long>(run.series.samples()) * run.series.grid().bins());
}

TEST_CASE("profile of s - log t is rigid only at the matching time rescale")
{
    const auto s = linspace(-2.0, 2.0, 81);
    std::vector<double> t;
    for (int i = 0; i <= 12; ++i) t.push_back(std::exp(-1.5 + 0.25 * i));
    const auto f = log_time_field(s, t);
    const std::vector<double> shifts{-0.25, 0.25};
    CHECK(log_shift_rigidity_test(f, shifts, -1.0).score <= 1e-3);
    CHECK(log_shift_rigidity_test(f, shifts, 0.0).score >= 1e-2);
    CHECK(log_shift_rigidity_test(f, shifts, 1.0).score >= 1e-2);
}
