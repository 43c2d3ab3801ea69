#include "grsd/residual_renorm.hpp"

#include <algorithm>
#include <cmath>

#include "grsd/error.hpp"
#include "grsd/parallel.hpp"
#include "grsd/rng.hpp"

namespace grsd {

namespace {

constexpr double zero_floor = 1e-300;

}  // namespace

ResidualChainTrace run_direction_chain(const ResidualStack& stack, const Vector& u0, int L, double centering,
                                       bool keep_directions)
{
    if (L < 0 || L > stack.propagator_count())
        fail(ErrorKind::IndexOutOfRange, "chain length " + std::to_string(L) + " exceeds the " +
                                             std::to_string(stack.propagator_count()) + " propagators of the stack");
    if (stack.propagator_count() > 0 && u0.size() != stack.dim())
        fail(ErrorKind::DimensionMismatch, "start direction does not match the stack width");
    if (std::abs(u0.norm() - 1.0) > 1e-10) fail(ErrorKind::InvalidArgument, "start direction must be a unit vector");
    ResidualChainTrace tr;
    tr.centering = centering;
    Vector u = u0;
    if (keep_directions) tr.directions.push_back(u);
    double sum = 0, sumsq = 0;
    for (int ell = 1; ell <= L; ++ell) {
        Vector w = u + stack.epsilon * (stack.layers[static_cast<std::size_t>(ell - 1)] * u);
        const double nrm = w.norm();
        if (!(nrm > zero_floor))
            fail(ErrorKind::ZeroVectorEncountered, "propagated direction vanished at layer " + std::to_string(ell));
        const double delta = std::log(nrm);
        u = w / nrm;
        tr.increments.push_back(delta);
        tr.accumulated += delta - centering;
        sum += delta;
        sumsq += delta * delta;
        if (keep_directions) tr.directions.push_back(u);
    }
    if (L > 1) tr.variance = std::max(0.0, (sumsq - sum * sum / L) / (L - 1));
    return tr;
}

std::uint64_t chain_member_seed(std::uint64_t master, int member)
{
    return derive_seed(master, stream_tag("chain-member"), static_cast<std::uint64_t>(member));
}

namespace {

// One residual step on u in place, drawing G row-major from rng exactly as
// gaussian_matrix does; returns the log increment.
double streaming_step(Rng& rng, Vector& u, Vector& w, double epsilon, double g_scale)
{
    const Eigen::Index n = u.size();
    for (Eigen::Index i = 0; i < n; ++i) {
        double acc = 0;
        for (Eigen::Index j = 0; j < n; ++j) acc += g_scale * rng.normal() * u(j);
        w(i) = u(i) + epsilon * acc;
    }
    const double nrm = w.norm();
    if (!(nrm > zero_floor)) fail(ErrorKind::ZeroVectorEncountered, "propagated direction vanished");
    u = w / nrm;
    return std::log(nrm);
}

}  // namespace

ChainEnsemble run_chain_ensemble(const ChainEnsembleSpec& spec)
{
    if (spec.n < 1 || spec.members < 1 || spec.depth < 1)
        fail(ErrorKind::InvalidArgument, "ensemble needs n, members and depth >= 1");
    const auto members = static_cast<std::size_t>(spec.members);
    std::vector<double> sums(members), sumsq(members);
    const double g_scale = 1.0 / std::sqrt(static_cast<double>(spec.n));
    parallel_for(members, spec.threads, [&](std::size_t m) {
        Rng rng(chain_member_seed(spec.seed, static_cast<int>(m)));
        Vector u = Vector::Unit(spec.n, 0), w(spec.n);
        double s = 0, q = 0;
        for (int ell = 0; ell < spec.depth; ++ell) {
            const double d = streaming_step(rng, u, w, spec.epsilon, g_scale);
            s += d;
            q += d * d;
        }
        sums[m] = s;
        sumsq[m] = q;
    });
    ChainEnsemble out;
    out.steps = static_cast<long long>(spec.members) * spec.depth;
    double s = 0, q = 0;
    for (std::size_t m = 0; m < members; ++m) {
        s += sums[m];
        q += sumsq[m];
    }
    out.mean_increment = s / static_cast<double>(out.steps);
    out.mean_square_increment = q / static_cast<double>(out.steps);
    out.increment_variance = std::max(0.0, out.mean_square_increment - out.mean_increment * out.mean_increment);
    out.sums = std::move(sums);
    return out;
}

double standard_normal_cdf(double x)
{
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double ks_distance_to_normal(std::vector<double> z)
{
    if (z.empty()) fail(ErrorKind::InsufficientSamples, "no samples");
    std::sort(z.begin(), z.end());
    const double n = static_cast<double>(z.size());
    double d = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double f = standard_normal_cdf(z[i]);
        d = std::max({d, (static_cast<double>(i) + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

double berry_esseen_distance(std::span<const double> sums)
{
    if (sums.size() < 2) fail(ErrorKind::InsufficientSamples, "need at least two ensemble members");
    double mean = 0;
    for (double s : sums) mean += s;
    mean /= static_cast<double>(sums.size());
    double var = 0;
    for (double s : sums) var += (s - mean) * (s - mean);
    var /= static_cast<double>(sums.size());
    if (!(var > 1e-300) || !(std::sqrt(var) > 1e-12 * std::max(1.0, std::abs(mean))))
        fail(ErrorKind::DegenerateVariance, "ensemble variance is below the floor");
    const double sd = std::sqrt(var);
    std::vector<double> z;
    z.reserve(sums.size());
    for (double s : sums) z.push_back((s - mean) / sd);
    return ks_distance_to_normal(std::move(z));
}

double berry_esseen_distance(std::span<const ResidualChainTrace> traces)
{
    std::vector<double> s;
    for (const auto& t : traces) s.push_back(t.accumulated);
    return berry_esseen_distance(s);
}

double second_moment_distance(const DenseMatrix& directions)
{
    const auto n = directions.cols();
    const DenseMatrix s = directions.transpose() * directions / static_cast<double>(directions.rows());
    return (s - DenseMatrix::Identity(n, n) / static_cast<double>(n)).norm();
}

MixingEstimate mixing_time(const MixingSpec& spec, double eta)
{
    if (!(eta > 0 && eta < 1)) fail(ErrorKind::InvalidTolerance, "eta must lie in (0, 1)");
    if (spec.n < 2 || spec.members < 2 || spec.max_layers < 1)
        fail(ErrorKind::InvalidArgument, "mixing needs n >= 2, >= 2 members and a positive layer budget");
    const auto members = static_cast<std::size_t>(spec.members);
    const double g_scale = 1.0 / std::sqrt(static_cast<double>(spec.n));
    std::vector<Rng> rngs;
    rngs.reserve(members);
    for (std::size_t m = 0; m < members; ++m)
        rngs.emplace_back(derive_seed(spec.seed, stream_tag("mixing-member"), m));
    DenseMatrix dirs(spec.members, spec.n);
    for (std::size_t m = 0; m < members; ++m) {
        Vector u = Vector::Unit(spec.n, 0);
        if (spec.uniform_start) {
            u = gaussian_vector(rngs[m], spec.n, 1.0);
            u /= u.norm();
        }
        dirs.row(static_cast<Eigen::Index>(m)) = u.transpose();
    }
    MixingEstimate est;
    est.eta = eta;
    est.distance.push_back(second_moment_distance(dirs));
    if (est.distance.back() <= eta) est.tau = 0;
    for (int ell = 1; ell <= spec.max_layers && !est.tau; ++ell) {
        parallel_for(members, spec.threads, [&](std::size_t m) {
            Vector u = dirs.row(static_cast<Eigen::Index>(m)).transpose(), w(spec.n);
            streaming_step(rngs[m], u, w, spec.epsilon, g_scale);
            dirs.row(static_cast<Eigen::Index>(m)) = u.transpose();
        });
        est.distance.push_back(second_moment_distance(dirs));
        if (est.distance.back() <= eta) est.tau = ell;
    }
    est.mixed = est.tau.has_value();
    std::vector<int> ks;
    for (int k = 1; k < static_cast<int>(est.distance.size()); ++k) ks.push_back(k);
    const auto fit = fit_exponential_decay(ks, std::span<const double>(est.distance).subspan(1), eta * 0.5, 1e300);
    est.rate = fit.valid ? fit.rate : 0.0;
    if (est.tau) est.c2_estimate = *est.tau * spec.epsilon * spec.epsilon / std::log(1.0 / eta);
    return est;
}

DepthThreshold depth_threshold(double epsilon, double eta, double c1, double c2)
{
    if (!(eta > 0 && eta < 1)) fail(ErrorKind::InvalidTolerance, "eta = " + format_real(eta) + " must lie in (0, 1)");
    if (!(epsilon > 0) || !(c1 > 0) || !(c2 > 0))
        fail(ErrorKind::InvalidTolerance, "epsilon, C1 and C2 must be positive");
    DepthThreshold d{eta, epsilon, c1, c2, 0, 0, 0};
    d.branch_variance = c1 / (epsilon * epsilon * eta * eta);
    d.branch_mixing = c2 / (epsilon * epsilon) * std::log(1.0 / eta);
    const double top = std::max(d.branch_variance, d.branch_mixing);
    d.l_min = static_cast<long long>(std::ceil(top * (1.0 - 1e-12)));
    return d;
}

DilutionResult depth_average_dilution(std::span<const LogShiftReport> layer_reports, int l_star,
                                      const LogShiftReport* assembled)
{
    const int L = static_cast<int>(layer_reports.size());
    if (L < 1) fail(ErrorKind::InvalidArgument, "no layer reports");
    if (l_star < 0 || l_star >= L) fail(ErrorKind::InvalidArgument, "l_star must satisfy 0 <= l_star < L");
    const auto& g0 = layer_reports.front().grid;
    for (const auto& r : layer_reports)
        if (!r.grid.same_layout(g0) || r.couplings.rows() != layer_reports.front().couplings.rows() ||
            r.statistic != layer_reports.front().statistic)
            fail(ErrorKind::GridMismatch, "layer reports do not share one grid and statistic");
    const auto W = layer_reports.front().couplings.rows();
    DilutionResult out;
    out.layers = L;
    out.bulk = DenseMatrix::Zero(W, W);
    out.boundary = DenseMatrix::Zero(W, W);
    for (int l = 0; l < L; ++l) {
        const auto& k = layer_reports[static_cast<std::size_t>(l)].couplings;
        (l < l_star ? out.boundary : out.bulk) += k;
        // the bound only concerns the boundary layers; all layers when there are none
        if (l < l_star || l_star == 0) out.coupling_bound = std::max(out.coupling_bound, k.cwiseAbs().maxCoeff());
    }
    DenseMatrix sum = out.bulk + out.boundary;
    if (assembled) {
        if (!assembled->grid.same_layout(g0) || assembled->couplings.rows() != W)
            fail(ErrorKind::GridMismatch, "assembled report uses a different grid");
        const double scale = std::max(1e-300, assembled->couplings.cwiseAbs().maxCoeff());
        out.additivity_discrepancy = (assembled->couplings - sum).cwiseAbs().maxCoeff() / scale;
    }
    out.bulk /= L;
    out.boundary /= L;
    out.combined = sum / L;
    out.bulk_err = fit_toeplitz(out.bulk).error;
    out.combined_err = fit_toeplitz(out.combined).error;
    out.boundary_contribution = out.boundary.cwiseAbs().maxCoeff();
    out.boundary_bound = out.coupling_bound * l_star / L;
    return out;
}

}  // namespace grsd
