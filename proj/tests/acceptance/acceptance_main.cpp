// Acceptance gate: one [PASS]/[FAIL] line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "grsd/condition_suite.hpp"
#include "grsd/experiments.hpp"
#include "grsd/gradient_flow.hpp"
#include "grsd/rng.hpp"

using namespace grsd;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(double x, int digits = 4)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, x);
    return buf;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

std::vector<TransportRun> g_transport;  // reused by criterion 2

Verdict power_law_recovery()
{
    Verdict v{true, ""};
    for (double a : {-0.5, 0.7, 2.0})
        for (double c : {0.5, 3.0}) {
            TransportSpec spec;
            spec.exponent = a;
            spec.coefficient = c;
            const auto t0 = std::chrono::steady_clock::now();
            auto run = run_manufactured_transport(spec);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            const double da = std::abs(run.fit.exponent - a);
            const double dc = std::abs(run.coefficient_mid / c - 1.0);
            const bool ok = da <= 0.05 && dc <= 0.10 && secs < 60;
            v.pass = v.pass && ok;
            v.detail += "(a=" + fmt(a) + ",c=" + fmt(c) + ": a_hat=" + fmt(run.fit.exponent, 6) + " c_hat=" +
                        fmt(run.coefficient_mid, 6) + (ok ? "" : " X") + ") ";
            g_transport.push_back(std::move(run));
        }
    return v;
}

double relative_balance(const ShellFluxSeries& flux, const LogBinGrid& grid)
{
    const double scale = flux.max_abs_rate();
    return scale > 0 ? flux.balance_residual(grid.window_lo(), grid.window_hi()) / scale : 0.0;
}

Verdict conservation_identity()
{
    double worst = 0;
    int runs = 0;
    for (const auto& r : g_transport) {
        worst = std::max(worst, relative_balance(r.flux, r.series.grid()));
        ++runs;
    }
    for (double gamma : {0.0, 0.3, 2.0}) {
        TransportSpec spec;
        spec.exponent = 0.7;
        spec.coefficient = 0.5;
        spec.dissipation = gamma > 0 ? DissipationModel::linear(gamma) : DissipationModel::zero();
        const auto r = run_manufactured_transport(spec);
        worst = std::max(worst, relative_balance(r.flux, r.series.grid()));
        ++runs;
    }
    // a learning run: residual energies of gradient flow in the eigenbasis of M(t)
    for (auto kind : {ModelKind::LinearRegression, ModelKind::TwoLayerLinear, ModelKind::ShallowTanh}) {
        ToySpec ts{24, 6, 1, 6};
        const ToyModel model = make_toy_model(kind, ts, 11);
        FlowOptions opt;
        opt.horizon = 0.2;
        opt.sample_interval = 0.002;
        const Trajectory tr = integrate_gradient_flow(model, opt);
        LogBinGrid grid(-40.0, 0.75, 64);
        std::vector<std::vector<double>> energies;
        for (std::size_t i = 0; i < tr.size(); ++i) {
            const DenseMatrix j = tr.jacobians[i].concatenated();
            const auto eig = clamp_psd(symmetric_eigendecompose(j * j.transpose()));
            const DenseMatrix r = model.output(tr.states[i]) - model.targets();
            const Vector e = Eigen::Map<const Vector>(r.data(), r.size());
            energies.push_back(shell_energies(eig, e, grid, 1e-300).energy);
        }
        for (auto model_d : {DissipationModel::zero(), DissipationModel::linear(0.5)}) {
            const ShellEnergySeries series(grid, tr.times, energies);
            const auto flux = invert_boundary_fluxes(series, model_d);
            worst = std::max(worst, relative_balance(flux, grid));
            ++runs;
        }
    }
    return {worst <= 1e-10, "max relative residual " + fmt(worst) + " over " + std::to_string(runs) + " runs"};
}

Verdict gronwall_envelope()
{
    GronwallSpec spec;
    double worst = std::numeric_limits<double>::infinity(), worst_slack = 0;
    for (int s = 0; s < 20; ++s) {
        const auto run = run_gronwall_check(spec, derive_seed(2024, stream_tag("acceptance-gronwall"), s));
        worst = std::min(worst, run.margin);
        worst_slack = std::max(worst_slack, run.report.growth_estimate / run.growth_bound);
    }
    return {worst >= -1e-8, "min margin " + fmt(worst) + " over 20 seeds; largest measured/bound growth ratio " +
                                fmt(worst_slack)};
}

Verdict berry_esseen()
{
    std::vector<double> two_point(4096);
    for (std::size_t i = 0; i < two_point.size(); ++i) two_point[i] = i % 2 ? 1.0 : -1.0;
    const double ks1 = berry_esseen_distance(two_point);

    ChainEnsembleSpec spec;
    spec.seed = 77;
    const auto sweep = run_ks_sweep(spec, {100, 1000, 10000});
    std::string pts;
    for (const auto& p : sweep.points) pts += "KS(" + std::to_string(p.depth) + ")=" + fmt(p.ks) + " ";
    const bool ok = std::abs(ks1 - 0.3413) <= 0.01 && std::abs(sweep.slope + 0.5) <= 0.1;
    return {ok, "two-point KS " + fmt(ks1, 5) + "; " + pts + "slope " + fmt(sweep.slope)};
}

Verdict mixing_scaling()
{
    std::vector<int> tau;
    for (double eps : {0.05, 0.1, 0.2}) {
        MixingSpec spec;
        spec.epsilon = eps;
        spec.seed = 5;
        const auto est = mixing_time(spec, 0.05);
        if (!est.tau) return {false, "not mixed within budget at eps " + fmt(eps)};
        tau.push_back(*est.tau);
    }
    const double r1 = static_cast<double>(tau[0]) / tau[1], r2 = static_cast<double>(tau[1]) / tau[2];
    const bool ok = r1 >= 2 && r1 <= 8 && r2 >= 2 && r2 <= 8;
    return {ok, "tau = " + std::to_string(tau[0]) + ", " + std::to_string(tau[1]) + ", " + std::to_string(tau[2]) +
                    "; ratios " + fmt(r1) + ", " + fmt(r2)};
}

Verdict log_shift_trend()
{
    LogShiftDepthSpec spec;
    std::vector<double> means;
    for (int L : {32, 128, 512}) {
        std::vector<double> e;
        for (int s = 0; s < 10; ++s) e.push_back(boundary_anchored_log_shift_error(spec, L, 100 + s));
        means.push_back(mean(e));
    }
    const bool trend = means[0] > means[1] && means[1] > means[2];

    const LogBinGrid grid(-3.0, 0.5, 12);
    DenseMatrix k(grid.window_size(), grid.window_size());
    for (int i = 0; i < k.rows(); ++i)
        for (int j = 0; j < k.cols(); ++j) k(i, j) = grid.center_s(grid.window_lo() + i);
    const double injected = fit_toeplitz(k).error;
    return {trend && injected >= 0.1, "mean err(32, 128, 512) = " + fmt(means[0]) + ", " + fmt(means[1]) + ", " +
                                          fmt(means[2]) + "; injected K_ij = s_i err " + fmt(injected)};
}

Verdict dilution()
{
    DilutionSpec spec;
    std::vector<double> q;
    double additivity = 0;
    for (int L : {64, 256, 1024}) {
        std::vector<double> per_seed;
        for (int s = 0; s < 3; ++s) {
            const auto run = run_depth_dilution(spec, L, 300 + s);
            per_seed.push_back(run.normalized_boundary);
            additivity = std::max(additivity, run.result.additivity_discrepancy);
        }
        q.push_back(mean(per_seed));
    }
    const double spread = *std::max_element(q.begin(), q.end()) / *std::min_element(q.begin(), q.end());
    return {spread <= 2.0 && additivity <= 1e-10, "boundary*L/C_K = " + fmt(q[0]) + ", " + fmt(q[1]) + ", " + fmt(q[2]) +
                                                      " (spread " + fmt(spread) + "); additivity " + fmt(additivity)};
}

Verdict ssm_bandedness_check()
{
    SsmBandednessSpec spec;
    const auto rep = ssm_bandedness(spec, 9);
    const double target = std::log(1.0 / spec.ssm.rho);
    const double k_pred = std::log(1.0 / spec.delta) / (1.0 - spec.ssm.rho);
    const int k_delta = rep.effective_range.front();
    const bool rate_ok = rep.decay.valid && std::abs(rep.decay.rate / target - 1.0) <= 0.10;
    const bool k_ok = k_delta > 0 && k_delta <= 2 * k_pred && k_delta >= k_pred / 2;
    return {rate_ok && k_ok, "rate " + fmt(rep.decay.rate) + " vs " + fmt(target) + " (" + std::to_string(rep.decay.points) +
                                 " points); K_delta " + std::to_string(k_delta) + " vs " + fmt(k_pred)};
}

Verdict covariance()
{
    double worst = 0;
    for (auto kind : {ModelKind::LinearRegression, ModelKind::TwoLayerLinear, ModelKind::ShallowTanh}) {
        const auto model = make_toy_model(kind, ToySpec{}, 21);
        for (double a : {0.5, 2.0, 3.0}) worst = std::max(worst, check_time_rescaling_covariance(model, a, 2.0));
    }
    return {worst <= 1e-5, "max deviation " + fmt(worst)};
}

Verdict rigidity()
{
    const auto s = linspace(-3.0, 3.0, 61);
    const auto t = linspace(1.0, 4.0, 13);
    const std::vector<double> shifts{-0.5, -0.2, 0.1, 0.3, 0.7};
    double exact = 0;
    for (double a : {-0.5, 0.7, 2.0})
        for (double c : {0.5, 3.0}) {
            exact = std::max(exact, log_shift_rigidity_test(power_law_field(c, a, s, t), shifts, 0.4).score);
            exact = std::max(exact, log_shift_rigidity_test(power_law_field(c, a, s, {1.0}), shifts, 0.0).score);
        }
    std::vector<double> lam;
    for (double x : s) lam.push_back(std::exp(x));
    std::nth_element(lam.begin(), lam.begin() + lam.size() / 2, lam.end());
    const double median = lam[lam.size() / 2];
    double additive = std::numeric_limits<double>::infinity();
    for (double a : {0.7, 2.0})
        for (double c : {0.5, 3.0})
            additive =
                std::min(additive, log_shift_rigidity_test(power_law_field(c, a, s, {1.0}, median), shifts, 0.0).score);
    return {exact <= 1e-6 && additive >= 0.1, "exact power laws max score " + fmt(exact) + "; additive lambda_0 min score " +
                                                  fmt(additive)};
}

}  // namespace

int main(int argc, char** argv)
{
    // optional criterion numbers restrict the run, e.g. `grsd_acceptance 2 3`
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"power-law recovery", power_law_recovery},
        {"conservation identity", conservation_identity},
        {"gronwall envelope", gronwall_envelope},
        {"berry-esseen rate", berry_esseen},
        {"mixing scaling", mixing_scaling},
        {"log-shift invariance trend", log_shift_trend},
        {"depth-average dilution", dilution},
        {"ssm effective bandedness", ssm_bandedness_check},
        {"gradient-flow covariance", covariance},
        {"rigidity detector", rigidity},
    };
    int failed = 0;
    int ran = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!only.empty() && std::find(only.begin(), only.end(), static_cast<int>(i + 1)) == only.end()) continue;
        ++ran;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] %zu %s: %s (%.1fs)\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    v.detail.c_str(), secs);
        std::fflush(stdout);
        failed += v.pass ? 0 : 1;
    }
    std::printf("%d of %d criteria passed\n", ran - failed, ran);
    return failed ? 1 : 0;
}
