#include "grsd/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "grsd/error.hpp"
#include "grsd/rng.hpp"

namespace grsd {

namespace {

// Mass of the unnormalised bump exp(-(x-c)^2 / 2w^2) on [x0, x1], written
// with erfc of the nearer tail so narrow cells far out keep full precision.
double bump_mass(double x0, double x1, double c, double w)
{
    if (!(x1 > x0)) return 0.0;
    const double k = w * std::sqrt(M_PI / 2.0);
    const double r = 1.0 / (w * std::sqrt(2.0));
    const double u0 = (x0 - c) * r, u1 = (x1 - c) * r;
    if (u0 >= 0) return k * (std::erfc(u0) - std::erfc(u1));
    if (u1 <= 0) return k * (std::erfc(-u1) - std::erfc(-u0));
    return k * (2.0 - std::erfc(-u0) - std::erfc(u1));
}

// Foot of the characteristic through (s, t) for ds/dt = c exp((a-1) s).
double characteristic_foot(double s, double t, double a, double c)
{
    const double b = a - 1.0;
    if (std::abs(b) < 1e-12) return s - c * t;
    const double z0 = std::exp(-b * s) + b * c * t;
    if (z0 <= 0) return b > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    return -std::log(z0) / b;
}

}  // namespace

std::vector<double> linspace(double lo, double hi, int count)
{
    if (count < 1) fail(ErrorKind::InvalidArgument, "linspace needs at least one point");
    std::vector<double> out(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = count == 1 ? lo : lo + (hi - lo) * i / (count - 1);
    return out;
}

TransportRun run_manufactured_transport(const TransportSpec& spec)
{
    if (!(spec.h > 0) || !(spec.s_hi > spec.s_lo) || spec.modes_per_bin < 1 || spec.time_samples < 3)
        fail(ErrorKind::InvalidArgument, "transport spec needs h > 0, s_hi > s_lo, modes and >= 3 samples");
    const int bins = static_cast<int>(std::lround((spec.s_hi - spec.s_lo) / spec.h));
    const int m = spec.modes_per_bin;
    const int N = bins * m;
    const double ds = spec.h / m;
    LogBinGrid grid(spec.s_lo, spec.h, bins);

    int lo = grid.window_lo(), hi = grid.window_hi();
    while (lo < hi && grid.center_s(lo) < spec.bump_center - spec.window_half_width) ++lo;
    while (hi > lo && grid.center_s(hi) > spec.bump_center + spec.window_half_width) --hi;
    const LogBinGrid window = grid.with_window(lo, hi);

    SymmetricEigenSystem eig;
    eig.eigenvalues.resize(N);
    for (int j = 0; j < N; ++j) eig.eigenvalues(j) = std::exp(spec.s_lo + (j + 0.5) * ds);
    eig.eigenvectors = DenseMatrix::Identity(N, N);

    const double b = spec.exponent - 1.0;
    const double reach = spec.window_half_width + 1.0;
    const double wmax = std::abs(spec.coefficient) *
                        std::max(std::exp(b * (spec.bump_center + reach)), std::exp(b * (spec.bump_center - reach)));
    const double dt = spec.dt_fraction * spec.h / wmax;

    std::vector<double> times;
    std::vector<std::vector<double>> energies;
    for (int i = 0; i < spec.time_samples; ++i) {
        const double t = (i - 0.5 * (spec.time_samples - 1)) * dt;
        Vector e(N);
        for (int j = 0; j < N; ++j) {
            const double s0 = spec.s_lo + j * ds, s1 = s0 + ds;
            const double f0 = characteristic_foot(s0, t, spec.exponent, spec.coefficient);
            const double f1 = characteristic_foot(s1, t, spec.exponent, spec.coefficient);
            e(j) = std::sqrt(bump_mass(f0, f1, spec.bump_center, spec.bump_width));
        }
        times.push_back(t);
        energies.push_back(shell_energies(eig, e, grid).energy);
    }

    ShellEnergySeries series(grid, times, energies);
    ShellFluxSeries flux = invert_boundary_fluxes(series, spec.dissipation);
    VelocityField field = velocity_field(flux, series);
    PowerLawFit fit = fit_power_law_series(field, window, spec.dissipation.name());
    const double balance = flux.balance_residual(grid.window_lo(), grid.window_hi());
    const double rate = flux.max_abs_rate();
    const double mid = fit.coefficient.at(fit.coefficient.size() / 2);
    return {std::move(series), std::move(flux), std::move(field), std::move(fit), window, balance, rate, mid};
}

double boundary_anchored_log_shift_error(const LogShiftDepthSpec& spec, int L, std::uint64_t seed)
{
    if (spec.n < 2 || L < 0 || spec.aspect < 1) fail(ErrorKind::InvalidArgument, "need n >= 2, L >= 0, aspect >= 1");
    const auto n = static_cast<Eigen::Index>(spec.n);
    Rng rng(derive_seed(seed, stream_tag("boundary-operator")));
    const DenseMatrix B = gaussian_matrix(rng, n, n * spec.aspect, 1.0 / std::sqrt(static_cast<double>(n * spec.aspect)));
    const DenseMatrix M0 = B * B.transpose();

    DenseMatrix P = DenseMatrix::Identity(n, n);
    if (L > 0) {
        const ResidualStack stack = make_residual_stack(spec.n, L + 1, spec.epsilon, derive_seed(seed, stream_tag("depth-stack")));
        for (int k = 1; k <= L; ++k) P = (stack.propagator(k) * P).eval();
    }
    const DenseMatrix M = P * M0 * P.transpose();
    const SymmetricEigenSystem eig = clamp_psd(symmetric_eigendecompose(0.5 * (M + M.transpose())));
    const auto s = log_eigenvalues(eig, default_eigen_floor(eig));
    const LogBinGrid grid = LogBinGrid::from_quantiles(s, spec.window_bins, spec.quantile);
    return log_bin_couplings(eig, M0 / M0.norm(), grid).error();
}

DilutionRun run_depth_dilution(const DilutionSpec& spec, int L, std::uint64_t seed)
{
    if (L <= spec.l_star) fail(ErrorKind::InvalidArgument, "depth must exceed l_star");
    const auto n = static_cast<Eigen::Index>(spec.n);
    const ResidualStack stack = make_residual_stack(spec.n, L, spec.epsilon, derive_seed(seed, stream_tag("dilution-stack")));
    Rng rng(derive_seed(seed, stream_tag("dilution-branches")));
    const double sd = 1.0 / std::sqrt(static_cast<double>(n));
    const DenseMatrix lg = gaussian_matrix(rng, n, n, sd);
    std::vector<DenseMatrix> br;
    for (int l = 0; l < L; ++l) br.push_back(gaussian_matrix(rng, n, n, sd));
    const auto jac = residual_layer_jacobians(stack, lg, br);

    // ordered from the output side: layer L first, it has the shortest product
    std::vector<DenseMatrix> layer_m;
    for (int l = L; l >= 1; --l) {
        const auto& j = jac[static_cast<std::size_t>(l - 1)];
        layer_m.push_back(j * j.transpose());
    }
    const DenseMatrix M = assemble_additive_M(jac);
    const SymmetricEigenSystem eig = clamp_psd(symmetric_eigendecompose(0.5 * (M + M.transpose())));
    const auto s = log_eigenvalues(eig, default_eigen_floor(eig));
    const LogBinGrid grid = LogBinGrid::from_quantiles(s, spec.window_bins, spec.quantile);

    LogShiftOptions opt;
    opt.statistic = CouplingStatistic::LinearMean;
    opt.exclude_self_pairs = false;
    std::vector<LogShiftReport> reports;
    for (const auto& ml : layer_m) reports.push_back(log_bin_couplings(eig, ml, grid, opt));
    const LogShiftReport direct = log_bin_couplings(eig, M, grid, opt);

    DilutionRun run;
    run.result = depth_average_dilution(reports, spec.l_star, &direct);
    run.normalized_boundary =
        run.result.coupling_bound > 0 ? run.result.boundary_contribution * L / run.result.coupling_bound : 0.0;
    return run;
}

BandednessReport ssm_bandedness(const SsmBandednessSpec& spec, std::uint64_t seed)
{
    const StableSSM ssm = make_stable_ssm(spec.ssm, derive_seed(seed, stream_tag("ssm")), spec.check_stability);
    Rng rng(derive_seed(seed, stream_tag("ssm-transition-rate")));
    const double sd = 1.0 / std::sqrt(static_cast<double>(spec.ssm.state_dim));
    std::vector<DenseMatrix> a_dot;
    for (int t = 0; t < spec.ssm.horizon; ++t) a_dot.push_back(gaussian_matrix(rng, spec.ssm.state_dim, spec.ssm.state_dim, sd));
    const SsmUnroll u = unroll_ssm_with_rate(ssm, spec.ssm.horizon, a_dot, spec.check_stability);

    BandednessOptions opt;
    const int k_max = std::min(spec.k_max, u.jacobian.count() - 1);
    for (int k = 0; k <= k_max; ++k) opt.Ks.push_back(k);
    opt.blocks = {spec.block};
    opt.deltas = {spec.delta};
    opt.fit_lo = spec.fit_lo;
    opt.fit_hi = spec.fit_hi;
    return bandedness_profile(u.jacobian, u.rate, opt);
}

GronwallRun run_gronwall_check(const GronwallSpec& spec, std::uint64_t seed)
{
    const BlockJacobian initial = make_incoherent_blocks(spec.n_f, spec.block_dims, IncoherenceProfile(std::vector<double>{}),
                                                         derive_seed(seed, stream_tag("gronwall-initial")));
    const BandedEvolution evo = make_banded_evolution(spec.block_dims, spec.bandwidth, spec.coefficient_scale,
                                                      derive_seed(seed, stream_tag("gronwall-evolution")));
    const BandedPath path = simulate_banded_evolution(initial, evo, spec.horizon, spec.step, spec.samples);
    GronwallRun run;
    run.report = incoherence_envelope(path.jacobians, spec.weight_base);
    for (std::size_t i = 0; i < path.jacobians.size(); ++i)
        run.coupling_norm = std::max(run.coupling_norm, coupling_bound(path.jacobians[i], path.rates[i], spec.bandwidth));
    run.growth_bound = gronwall_constant(run.coupling_norm, spec.bandwidth, spec.weight_base);
    run.margin = gronwall_margin(run.report, run.growth_bound);
    return run;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size() || x.size() < 2) fail(ErrorKind::InvalidArgument, "slope needs >= 2 paired points");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0 && y[i] > 0)) fail(ErrorKind::InvalidArgument, "log-log slope needs positive values");
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    if (sxx == 0) fail(ErrorKind::DegenerateVariance, "all x values coincide");
    return sxy / sxx;
}

KsSweep run_ks_sweep(const ChainEnsembleSpec& base, const std::vector<int>& depths)
{
    KsSweep sweep;
    std::vector<double> x, y;
    for (int d : depths) {
        ChainEnsembleSpec spec = base;
        spec.depth = d;
        const ChainEnsemble ens = run_chain_ensemble(spec);
        KsSweepPoint p;
        p.depth = d;
        p.ks = berry_esseen_distance(ens.sums);
        p.mean_square_over_eps2 = ens.mean_square_increment / (spec.epsilon * spec.epsilon);
        sweep.points.push_back(p);
        x.push_back(d);
        y.push_back(p.ks);
    }
    if (depths.size() >= 2) sweep.slope = loglog_slope(x, y);
    return sweep;
}

SampledField power_law_field(double c, double a, const std::vector<double>& s, const std::vector<double>& t, double offset)
{
    SampledField f{s, t, {}};
    for (std::size_t j = 0; j < t.size(); ++j) {
        std::vector<double> row;
        for (double x : s) row.push_back(c * std::exp(a * x) + offset);
        f.values.push_back(std::move(row));
    }
    return f;
}

SampledField log_time_field(const std::vector<double>& s, const std::vector<double>& t)
{
    // a profile of s - log t only; no power of lambda can absorb it unless k = -1
    SampledField f{s, t, {}};
    for (double tt : t) {
        std::vector<double> row;
        for (double x : s) {
            const double z = x - std::log(tt);
            row.push_back(std::exp(0.5 * z) * (1.0 + 0.3 * std::tanh(z)));
        }
        f.values.push_back(std::move(row));
    }
    return f;
}

JacobianPath residual_condition_path(const ResidualPathSpec& spec, std::uint64_t seed)
{
    if (spec.depth < 2 || spec.samples < 1) fail(ErrorKind::InvalidArgument, "residual path needs depth >= 2 and samples >= 1");
    const auto n = static_cast<Eigen::Index>(spec.n);
    const auto p = static_cast<Eigen::Index>(spec.branch_width);
    const ResidualStack base = make_residual_stack(spec.n, spec.depth, spec.epsilon, derive_seed(seed, stream_tag("path-stack")));
    Rng rng(derive_seed(seed, stream_tag("path-velocity")));
    const double sd = 1.0 / std::sqrt(static_cast<double>(n));
    std::vector<DenseMatrix> g_dot;
    for (int k = 0; k < base.propagator_count(); ++k) g_dot.push_back(gaussian_matrix(rng, n, n, sd));
    const DenseMatrix lg = gaussian_matrix(rng, n, n, sd);
    std::vector<DenseMatrix> br;
    for (int l = 0; l < spec.depth; ++l) br.push_back(gaussian_matrix(rng, n, p, 1.0 / std::sqrt(static_cast<double>(p))));

    JacobianPath path;
    for (int i = 0; i < spec.samples; ++i) {
        const double t = i * spec.dt;
        std::vector<DenseMatrix> gens;
        for (int k = 0; k < base.propagator_count(); ++k)
            gens.push_back(base.layers[static_cast<std::size_t>(k)] + t * g_dot[static_cast<std::size_t>(k)]);
        const ResidualStack stack = make_residual_stack(std::move(gens), spec.epsilon);

        // suffix products R_l = A_{L-1} ... A_{l+1} and their time derivatives
        std::vector<DenseMatrix> blocks(static_cast<std::size_t>(spec.depth)), rates(blocks.size());
        DenseMatrix R = DenseMatrix::Identity(n, n), Rdot = DenseMatrix::Zero(n, n);
        for (int l = spec.depth; l >= 1; --l) {
            if (l + 1 <= spec.depth - 1) {
                const DenseMatrix A = stack.propagator(l + 1);
                Rdot = (Rdot * A + spec.epsilon * R * g_dot[static_cast<std::size_t>(l)]).eval();
                R = (R * A).eval();
            }
            const auto& b = br[static_cast<std::size_t>(l - 1)];
            blocks[static_cast<std::size_t>(l - 1)] = lg * R * b;
            rates[static_cast<std::size_t>(l - 1)] = lg * Rdot * b;
        }
        path.jacobians.emplace_back(std::move(blocks), t);
        path.rates.emplace_back(std::move(rates), t);
    }
    return path;
}

JacobianPath ssm_condition_path(const SsmPathSpec& spec, std::uint64_t seed)
{
    const bool stable = spec.ssm.rho < 1;
    const StableSSM base = make_stable_ssm(spec.ssm, derive_seed(seed, stream_tag("ssm")), stable);
    Rng rng(derive_seed(seed, stream_tag("ssm-transition-rate")));
    const int n = spec.ssm.state_dim;
    // small enough that A + t Adot keeps the spectral radius below one for stable runs
    const double sd = 0.1 * (1.0 - std::min(spec.ssm.rho, 0.99)) / std::sqrt(static_cast<double>(n));
    std::vector<DenseMatrix> a_dot;
    for (int t = 0; t < spec.ssm.horizon; ++t) a_dot.push_back(gaussian_matrix(rng, n, n, sd));

    JacobianPath path;
    for (int i = 0; i < spec.samples; ++i) {
        const double t = i * spec.dt;
        StableSSM ssm = base;
        for (std::size_t k = 0; k < ssm.A.size(); ++k) ssm.A[k] += t * a_dot[k];
        const SsmUnroll u = unroll_ssm_with_rate(ssm, spec.ssm.horizon, a_dot, false);
        path.jacobians.emplace_back(u.jacobian.blocks(), t);
        path.rates.emplace_back(u.rate.blocks(), t);
    }
    return path;
}

JacobianPath single_block_path(int n_f, int width, int samples, double dt, std::uint64_t seed)
{
    Rng rng(derive_seed(seed, stream_tag("single-block")));
    const double sd = 1.0 / std::sqrt(static_cast<double>(n_f));
    const DenseMatrix j0 = gaussian_matrix(rng, n_f, width, sd);
    const DenseMatrix jd = gaussian_matrix(rng, n_f, width, sd);
    JacobianPath path;
    for (int i = 0; i < samples; ++i) {
        const double t = i * dt;
        path.jacobians.emplace_back(std::vector<DenseMatrix>{j0 + t * jd}, t);
        path.rates.emplace_back(std::vector<DenseMatrix>{jd}, t);
    }
    return path;
}

}  // namespace grsd
