#include "grsd/condition_diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "grsd/error.hpp"

namespace grsd {

bool BandednessEntry::any_rank_deficient() const
{
    return std::any_of(rank_deficient.begin(), rank_deficient.end(), [](char c) { return c != 0; });
}

double BandednessEntry::max_residual() const
{
    double m = 0;
    for (double r : residual)
        if (!std::isnan(r)) m = std::max(m, r);
    return m;
}

namespace {

void require_conformal(const BlockJacobian& blocks, const BlockJacobian& rate)
{
    if (!blocks.conformal_with(rate)) fail(ErrorKind::DimensionMismatch, "rate blocks are not conformal with the Jacobian blocks");
}

std::vector<int> block_list(const BlockJacobian& blocks, std::span<const int> only)
{
    std::vector<int> ls;
    if (only.empty()) {
        for (int l = 0; l < blocks.count(); ++l) ls.push_back(l);
    } else {
        for (int l : only) {
            if (l < 0 || l >= blocks.count()) fail(ErrorKind::IndexOutOfRange, "block index " + std::to_string(l));
            ls.push_back(l);
        }
    }
    return ls;
}

}  // namespace

BandednessEntry bandedness_residual(const BlockJacobian& blocks, const BlockJacobian& rate, int K,
                                    std::span<const int> only_blocks)
{
    require_conformal(blocks, rate);
    if (K < 0) fail(ErrorKind::InvalidArgument, "bandwidth must be >= 0");
    BandednessEntry e;
    e.K = K;
    e.residual.assign(static_cast<std::size_t>(blocks.count()), std::numeric_limits<double>::quiet_NaN());
    e.rank_deficient.assign(static_cast<std::size_t>(blocks.count()), 0);
    for (int l : block_list(blocks, only_blocks)) {
        const DenseMatrix& rhs = rate.block(l);
        const double norm = rhs.norm();
        if (norm == 0.0) {
            e.residual[static_cast<std::size_t>(l)] = 0.0;
            continue;
        }
        const DenseMatrix n = blocks.neighbourhood(l, K);
        Eigen::ColPivHouseholderQR<DenseMatrix> qr(n);
        const Eigen::Index rank = qr.rank();
        e.rank_deficient[static_cast<std::size_t>(l)] = rank < std::min(n.rows(), n.cols());
        const DenseMatrix proj = qr.householderQ().adjoint() * rhs;
        const double res = proj.bottomRows(proj.rows() - rank).norm();
        e.residual[static_cast<std::size_t>(l)] = std::min(1.0, res / norm);
    }
    return e;
}

std::vector<double> BandednessReport::max_residual() const
{
    std::vector<double> m;
    for (const auto& e : entries) m.push_back(e.max_residual());
    return m;
}

DecayFit fit_exponential_decay(std::span<const int> k, std::span<const double> r, double lo, double hi)
{
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (std::size_t i = 0; i < k.size(); ++i) {
        if (!(r[i] >= lo && r[i] <= hi)) continue;
        const double x = k[i], y = std::log(r[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    DecayFit fit;
    fit.points = n;
    if (n < 3) return fit;
    const double den = n * sxx - sx * sx;
    if (!(den > 0)) return fit;
    const double slope = (n * sxy - sx * sy) / den;
    fit.rate = -slope;
    fit.prefactor = std::exp((sy - slope * sx) / n);
    fit.valid = true;
    return fit;
}

BandednessReport bandedness_profile(const BlockJacobian& blocks, const BlockJacobian& rate,
                                    const BandednessOptions& options)
{
    BandednessReport rep;
    rep.Ks = options.Ks;
    if (rep.Ks.empty())
        for (int K = 0; K < blocks.count(); ++K) rep.Ks.push_back(K);
    for (int K : rep.Ks) rep.entries.push_back(bandedness_residual(blocks, rate, K, options.blocks));
    const auto worst = rep.max_residual();
    rep.deltas = options.deltas;
    for (double d : rep.deltas) {
        int kd = -1;
        for (std::size_t i = 0; i < worst.size(); ++i)
            if (worst[i] <= d) {
                kd = rep.Ks[i];
                break;
            }
        rep.effective_range.push_back(kd);
    }
    rep.decay = fit_exponential_decay(rep.Ks, worst, options.fit_lo, options.fit_hi);
    return rep;
}

double coupling_bound(const BlockJacobian& blocks, const BlockJacobian& rate, int K)
{
    require_conformal(blocks, rate);
    double c = 0;
    for (int l = 0; l < blocks.count(); ++l) {
        const DenseMatrix n = blocks.neighbourhood(l, K);
        Eigen::ColPivHouseholderQR<DenseMatrix> qr(n);
        const DenseMatrix coef = qr.solve(rate.block(l));
        double s = 0;
        Eigen::Index off = 0;
        for (int p = std::max(0, l - K); p <= std::min(blocks.count() - 1, l + K); ++p) {
            const auto d = blocks.block(p).cols();
            s += operator_norm(coef.middleRows(off, d));
            off += d;
        }
        c = std::max(c, s);
    }
    return c;
}

IncoherenceReport incoherence_envelope(std::span<const BlockJacobian> blocks_over_time, double rho_w)
{
    if (blocks_over_time.size() < 2) fail(ErrorKind::TooFewSamples, "incoherence envelope needs >= 2 time samples");
    if (!(rho_w > 0 && rho_w < 1)) fail(ErrorKind::InvalidArgument, "weight base must lie strictly inside (0, 1)");
    IncoherenceReport rep;
    rep.weight_base = rho_w;
    const int L = blocks_over_time.front().count();
    for (const auto& j : blocks_over_time) {
        if (j.count() != L) fail(ErrorKind::DimensionMismatch, "block count changes along the path");
        std::vector<double> u(static_cast<std::size_t>(L), 0.0);
        for (int l = 0; l < L; ++l)
            for (int m = l; m < L; ++m) {
                auto& slot = u[static_cast<std::size_t>(m - l)];
                slot = std::max(slot, operator_norm(j.block(l).transpose() * j.block(m)));
            }
        double big_u = 0, w = 1;
        for (double x : u) {
            big_u += w * x;
            w *= rho_w;
        }
        if (!std::isfinite(big_u)) fail(ErrorKind::DivergentWeightedSum, "weighted envelope sum is not finite");
        rep.times.push_back(j.time());
        rep.envelope.push_back(std::move(u));
        rep.weighted.push_back(big_u);
    }
    double growth = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < rep.weighted.size(); ++i) {
        const double dt = rep.times[i] - rep.times[i - 1];
        if (!(dt > 0)) fail(ErrorKind::InvalidArgument, "sample times must increase");
        if (rep.weighted[i] > 0 && rep.weighted[i - 1] > 0)
            growth = std::max(growth, (std::log(rep.weighted[i]) - std::log(rep.weighted[i - 1])) / dt);
    }
    rep.growth_estimate = std::isfinite(growth) ? growth : 0.0;
    rep.margin = gronwall_margin(rep, rep.growth_estimate);
    return rep;
}

double gronwall_constant(double coupling_norm, int K, double rho_w)
{
    double s = 0;
    for (int j = -K; j <= K; ++j) s += std::pow(rho_w, -j);
    return 2.0 * coupling_norm * s;
}

double gronwall_margin(const IncoherenceReport& report, double growth)
{
    double m = std::numeric_limits<double>::infinity();
    const double t0 = report.times.front(), u0 = report.weighted.front();
    for (std::size_t i = 0; i < report.times.size(); ++i)
        m = std::min(m, std::exp(growth * (report.times[i] - t0)) * u0 - report.weighted[i]);
    return m;
}

PathNorms controlled_path_norms(std::span<const BlockJacobian> jacobians, std::span<const BlockJacobian> rates,
                                bool diverged)
{
    PathNorms p;
    p.diverged = diverged;
    for (std::size_t i = 0; i < jacobians.size(); ++i) {
        const double jn = operator_norm(jacobians[i].concatenated());
        double rn = std::numeric_limits<double>::quiet_NaN();
        if (i < rates.size() && rates[i].count() > 0) rn = operator_norm(rates[i].concatenated());
        if (!std::isfinite(jn)) break;
        p.times.push_back(jacobians[i].time());
        p.j_norm.push_back(jn);
        p.jdot_norm.push_back(rn);
        p.sup_j = std::max(p.sup_j, jn);
        if (std::isfinite(rn)) p.sup_jdot = std::max(p.sup_jdot, rn);
        ++p.samples;
    }
    p.c_j = p.sup_j + p.sup_jdot;
    return p;
}

PathNorms controlled_path_norms(const Trajectory& trajectory)
{
    std::vector<BlockJacobian> rates(trajectory.size());
    for (std::size_t i = 1; i + 1 < trajectory.size(); ++i) rates[i] = jacobian_rate_blocks(trajectory, i);
    return controlled_path_norms(trajectory.jacobians, rates, trajectory.diverged);
}

ToeplitzFit fit_toeplitz(const DenseMatrix& k)
{
    if (k.rows() != k.cols()) fail(ErrorKind::NonSquare, "coupling matrix must be square");
    const Eigen::Index w = k.rows();
    ToeplitzFit fit;
    fit.kernel.assign(static_cast<std::size_t>(std::max<Eigen::Index>(0, 2 * w - 1)), 0.0);
    DenseMatrix resid = k;
    for (Eigen::Index d = -(w - 1); d <= w - 1; ++d) {
        double mean = 0;
        Eigen::Index cnt = 0;
        for (Eigen::Index i = std::max<Eigen::Index>(0, -d); i < std::min(w, w - d); ++i, ++cnt) mean += k(i, i + d);
        mean /= static_cast<double>(cnt);
        fit.kernel[static_cast<std::size_t>(d + w - 1)] = mean;
        for (Eigen::Index i = std::max<Eigen::Index>(0, -d); i < std::min(w, w - d); ++i) resid(i, i + d) -= mean;
    }
    const double total = k.norm();
    fit.error = total > 0 ? std::min(1.0, resid.norm() / total) : 0.0;
    return fit;
}

LogShiftReport log_bin_couplings(const SymmetricEigenSystem& eig, const DenseMatrix& coupling, const LogBinGrid& grid,
                                 const LogShiftOptions& options)
{
    if (coupling.rows() != eig.dim() || coupling.cols() != eig.dim())
        fail(ErrorKind::DimensionMismatch, "coupling operator does not match the eigensystem");
    require_finite(coupling, "coupling operator");
    const double scale = std::max(1e-300, coupling.cwiseAbs().maxCoeff());
    if ((coupling - coupling.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
        fail(ErrorKind::AsymmetryExceedsTol, "coupling operator must be symmetric");

    const double floor = options.eigen_floor > 0 ? options.eigen_floor : default_eigen_floor(eig);
    const BinAssignment asg = assign_log_bins(eig, grid, floor);
    const int W = grid.window_size();

    LogShiftReport rep{grid, DenseMatrix::Zero(W, W), {}, {}, {}, false, {}, options.statistic};
    std::vector<std::vector<int>> members(static_cast<std::size_t>(W));
    for (int i = 0; i < W; ++i) {
        members[static_cast<std::size_t>(i)] = asg.members(grid.window_lo() + i);
        rep.population.push_back(static_cast<int>(members[static_cast<std::size_t>(i)].size()));
    }
    const int need = std::max(1, options.min_population);
    std::vector<std::vector<int>> used = members;
    for (int i = 0; i < W; ++i) {
        if (rep.population[static_cast<std::size_t>(i)] >= need) continue;
        rep.low_population = true;
        int best = -1;
        for (int d = 1; d < W && best < 0; ++d)
            for (int j : {i - d, i + d})
                if (j >= 0 && j < W && rep.population[static_cast<std::size_t>(j)] >= need) {
                    best = j;
                    break;
                }
        if (best < 0)
            fail(ErrorKind::EmptyBinPair, "no window bin holds " + std::to_string(need) + " eigenvalues");
        used[static_cast<std::size_t>(i)] = members[static_cast<std::size_t>(best)];
        rep.merged.push_back(i);
    }

    std::vector<int> sel;
    std::vector<int> pos(static_cast<std::size_t>(eig.dim()), -1);
    for (const auto& m : members)
        for (int u : m) {
            pos[static_cast<std::size_t>(u)] = static_cast<int>(sel.size());
            sel.push_back(u);
        }
    for (const auto& m : used)
        for (int u : m)
            if (pos[static_cast<std::size_t>(u)] < 0) {
                pos[static_cast<std::size_t>(u)] = static_cast<int>(sel.size());
                sel.push_back(u);
            }
    DenseMatrix phi(eig.dim(), static_cast<Eigen::Index>(sel.size()));
    for (std::size_t c = 0; c < sel.size(); ++c) phi.col(static_cast<Eigen::Index>(c)) = eig.eigenvectors.col(sel[c]);
    const DenseMatrix x = phi.transpose() * (coupling * phi);

    const bool squared = options.statistic == CouplingStatistic::SquaredMean;
    for (int i = 0; i < W; ++i)
        for (int j = 0; j < W; ++j) {
            double acc = 0;
            long cnt = 0;
            for (int u : used[static_cast<std::size_t>(i)])
                for (int v : used[static_cast<std::size_t>(j)]) {
                    if (options.exclude_self_pairs && u == v) continue;
                    const double xv = x(pos[static_cast<std::size_t>(u)], pos[static_cast<std::size_t>(v)]);
                    acc += squared ? xv * xv : xv;
                    ++cnt;
                }
            if (cnt == 0) fail(ErrorKind::EmptyBinPair, "bins " + std::to_string(i) + " and " + std::to_string(j) + " share no pairs");
            rep.couplings(i, j) = acc / static_cast<double>(cnt);
        }
    rep.fit = fit_toeplitz(rep.couplings);
    // couplings at roundoff level carry no position structure to measure
    const double noise = 1e-13 * std::max(1e-300, x.cwiseAbs().maxCoeff());
    if (rep.couplings.cwiseAbs().maxCoeff() <= (squared ? noise * noise : noise)) rep.fit.error = 0.0;

    const double gap = options.gap_floor >= 0 ? options.gap_floor : grid.h();
    double sum_sq = 0;
    for (const auto& mi : members)
        for (int u : mi)
            for (const auto& mj : members)
                for (int v : mj) {
                    if (u == v) continue;
                    const double su = std::log(eig.eigenvalues(u)), sv = std::log(eig.eigenvalues(v));
                    if (std::abs(sv - su) < gap) continue;
                    const double om = x(pos[static_cast<std::size_t>(u)], pos[static_cast<std::size_t>(v)]) /
                                      (eig.eigenvalues(v) - eig.eigenvalues(u));
                    if (!std::isfinite(om)) {
                        rep.omega.all_finite = false;
                        continue;
                    }
                    ++rep.omega.pairs;
                    rep.omega.max_abs = std::max(rep.omega.max_abs, std::abs(om));
                    sum_sq += om * om;
                }
    rep.omega.mean_square = rep.omega.pairs ? sum_sq / static_cast<double>(rep.omega.pairs) : 0.0;
    return rep;
}

}  // namespace grsd
