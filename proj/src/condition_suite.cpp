#include "grsd/condition_suite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "grsd/error.hpp"

namespace grsd {

JacobianPath path_from_trajectory(const Trajectory& trajectory)
{
    JacobianPath p;
    p.jacobians = trajectory.jacobians;
    p.rates.resize(trajectory.size());
    for (std::size_t i = 1; i + 1 < trajectory.size(); ++i) p.rates[i] = jacobian_rate_blocks(trajectory, i);
    p.diverged = trajectory.diverged;
    return p;
}

std::string to_string(CouplingOperatorKind kind)
{
    switch (kind) {
    case CouplingOperatorKind::RelativeRate: return "relative-rate";
    case CouplingOperatorKind::RateOfM: return "rate-of-M";
    case CouplingOperatorKind::M: return "M";
    case CouplingOperatorKind::Custom: return "custom";
    }
    return "unknown";
}

bool ConditionReport::all_pass() const
{
    return std::all_of(conditions.begin(), conditions.end(), [](const auto& c) { return c.pass; });
}

namespace {

template <class Fn>
void labelled(int index, const char* name, Fn&& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        throw Error(e.kind(), "condition " + std::to_string(index) + " (" + name + "): " + e.what());
    }
}

std::vector<std::size_t> rated_samples(const JacobianPath& p)
{
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < p.rates.size() && i < p.jacobians.size(); ++i)
        if (p.rates[i].count() > 0) idx.push_back(i);
    return idx;
}

DenseMatrix gram(const BlockJacobian& j)
{
    const std::vector<DenseMatrix> blocks = j.blocks();
    return assemble_additive_M(blocks);
}

DenseMatrix rate_of_gram(const BlockJacobian& j, const BlockJacobian& r)
{
    const DenseMatrix a = j.concatenated(), b = r.concatenated();
    const DenseMatrix x = b * a.transpose();
    return x + x.transpose();
}

DenseMatrix relative_rate(const SymmetricEigenSystem& eig, const DenseMatrix& rate, double floor)
{
    Vector w(eig.dim());
    for (Eigen::Index u = 0; u < eig.dim(); ++u)
        w(u) = eig.eigenvalues(u) >= floor && eig.eigenvalues(u) > 0 ? 1.0 / std::sqrt(eig.eigenvalues(u)) : 0.0;
    const DenseMatrix x = w.asDiagonal() * (eig.eigenvectors.transpose() * rate * eig.eigenvectors) * w.asDiagonal();
    const DenseMatrix back = eig.eigenvectors * x * eig.eigenvectors.transpose();
    return 0.5 * (back + back.transpose());
}

double json_number(double x)
{
    return std::isfinite(x) ? x : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

ConditionReport condition_suite(const SuiteInput& input, const ConditionThresholds& th)
{
    const JacobianPath& path = input.path;
    if (path.jacobians.empty()) fail(ErrorKind::InvalidArgument, "condition suite needs at least one Jacobian sample");
    ConditionReport rep;
    rep.thresholds = th;
    rep.provenance = input.provenance;
    rep.provenance["family"] = input.family;
    const auto rated = rated_samples(path);
    const int L = path.jacobians.front().count();

    // Condition 1: banded evolution
    labelled(1, "bandedness", [&] {
        auto& c = rep.conditions[0];
        c.name = "bandedness";
        c.threshold = th.bandedness;
        if (rated.empty()) fail(ErrorKind::TooFewSamples, "no Jacobian rate available on the path");
        std::vector<std::size_t> probe{rated.front(), rated[rated.size() / 2], rated.back()};
        probe.erase(std::unique(probe.begin(), probe.end()), probe.end());
        double score = 0;
        bool deficient = false;
        for (std::size_t i : probe) {
            const auto e = bandedness_residual(path.jacobians[i], path.rates[i], th.bandwidth);
            score = std::max(score, e.max_residual());
            deficient = deficient || e.any_rank_deficient();
        }
        BandednessOptions opt;
        for (int K = 0; K <= std::min(L - 1, std::max(2 * th.bandwidth, 16)); ++K) opt.Ks.push_back(K);
        opt.deltas = {th.bandedness};
        const std::size_t mid = rated[rated.size() / 2];
        rep.bandedness = bandedness_profile(path.jacobians[mid], path.rates[mid], opt);
        c.score = score;
        c.pass = score <= th.bandedness;
        if (deficient) c.warnings.push_back("rank-deficient neighbour span; projected onto the revealed rank");
        c.details["bandwidth"] = th.bandwidth;
        c.details["samples_probed"] = probe.size();
        c.details["effective_range"] = rep.bandedness.effective_range.front();
        c.details["decay_rate"] = json_number(rep.bandedness.decay.valid ? rep.bandedness.decay.rate : NAN);
    });

    // Condition 2: initial incoherence and its Gronwall propagation
    labelled(2, "incoherence", [&] {
        auto& c = rep.conditions[1];
        c.name = "incoherence";
        c.threshold = th.incoherence_tail;
        if (path.jacobians.size() >= 2) {
            rep.incoherence = incoherence_envelope(path.jacobians, th.weight_base);
        } else {
            const std::vector<BlockJacobian> twice{path.jacobians.front(), path.jacobians.front()};
            std::vector<BlockJacobian> shifted = twice;
            shifted[1] = BlockJacobian(twice[1].blocks(), twice[1].time() + 1.0);
            rep.incoherence = incoherence_envelope(shifted, th.weight_base);
            c.warnings.push_back("single time sample; growth constant not measurable");
        }
        const auto& u0 = rep.incoherence.envelope.front();
        double tail = 0, w = th.weight_base;
        for (std::size_t k = 1; k < u0.size(); ++k, w *= th.weight_base) tail += w * u0[k];
        c.score = u0[0] > 0 ? tail / u0[0] : 0.0;
        bool ok = c.score <= th.incoherence_tail && rep.incoherence.margin >= -th.gronwall_tol;
        c.details["weighted_tail_relative"] = c.score;
        c.details["growth_estimate"] = rep.incoherence.growth_estimate;
        c.details["gronwall_margin"] = rep.incoherence.margin;
        if (!rated.empty() && path.jacobians.size() >= 2) {
            const double ca = coupling_bound(path.jacobians[rated.front()], path.rates[rated.front()], th.bandwidth);
            const double crho = gronwall_constant(ca, th.bandwidth, th.weight_base);
            const double m = gronwall_margin(rep.incoherence, crho);
            c.details["coupling_bound"] = ca;
            c.details["gronwall_constant"] = crho;
            c.details["gronwall_margin_theory"] = m;
            if (m < -th.gronwall_tol) c.warnings.push_back("envelope exceeds the banded-evolution Gronwall bound");
        }
        c.pass = ok;
    });

    // Condition 3: controlled path norms
    labelled(3, "path-norms", [&] {
        auto& c = rep.conditions[2];
        c.name = "path-norms";
        c.threshold = th.path_bound;
        rep.path_norms = controlled_path_norms(path.jacobians, path.rates, path.diverged);
        c.score = rep.path_norms.c_j;
        c.pass = std::isfinite(c.score) && c.score <= th.path_bound && !path.diverged;
        if (path.diverged) c.warnings.push_back("trajectory diverged; C_J reflects the last finite sample");
        c.details["sup_J"] = rep.path_norms.sup_j;
        c.details["sup_Jdot"] = rep.path_norms.sup_jdot;
        c.details["samples"] = rep.path_norms.samples;
    });

    // Condition 4: log-shift invariance of bin couplings
    labelled(4, "log-shift", [&] {
        auto& c = rep.conditions[3];
        c.name = "log-shift";
        c.threshold = th.log_shift;
        c.details["coupling_operator"] = to_string(input.coupling);
        const std::size_t i = rated.empty() ? path.jacobians.size() / 2 : rated[rated.size() / 2];
        const auto eig = clamp_psd(symmetric_eigendecompose(gram(path.jacobians[i])));
        const double floor = default_eigen_floor(eig);
        DenseMatrix op;
        switch (input.coupling) {
        case CouplingOperatorKind::RelativeRate:
        case CouplingOperatorKind::RateOfM:
            if (rated.empty()) fail(ErrorKind::TooFewSamples, "rate coupling needs a Jacobian rate");
            op = rate_of_gram(path.jacobians[i], path.rates[i]);
            if (input.coupling == CouplingOperatorKind::RelativeRate) op = relative_rate(eig, op, floor);
            break;
        case CouplingOperatorKind::M: op = gram(path.jacobians[i]); break;
        case CouplingOperatorKind::Custom:
            if (!input.custom_coupling) fail(ErrorKind::InvalidArgument, "custom coupling operator missing");
            op = *input.custom_coupling;
            break;
        }
        const auto s = log_eigenvalues(eig, floor);
        c.details["retained_eigenvalues"] = s.size();
        try {
            const auto grid = LogBinGrid::from_quantiles(s, th.window_bins, th.quantile);
            LogShiftOptions opt;
            opt.min_population = th.min_population;
            rep.log_shift = log_bin_couplings(eig, op, grid, opt);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::EmptyBinPair && e.kind() != ErrorKind::EmptyWindow) throw;
            c.score = std::numeric_limits<double>::quiet_NaN();
            c.pass = false;
            c.warnings.push_back(std::string("low bin population: ") + e.what());
            return;
        }
        const auto& ls = *rep.log_shift;
        c.score = ls.error();
        c.pass = c.score <= th.log_shift;
        if (ls.low_population)
            c.warnings.push_back("low bin population: " + std::to_string(ls.merged.size()) +
                                 " window bins merged with a neighbour");
        c.details["h"] = ls.grid.h();
        c.details["window"] = {ls.grid.window_lo(), ls.grid.window_hi()};
        c.details["population"] = ls.population;
        c.details["omega_pairs"] = ls.omega.pairs;
        c.details["omega_all_finite"] = ls.omega.all_finite;
        rep.provenance["window_bins"] = th.window_bins;
        rep.provenance["h"] = ls.grid.h();
    });

    // bin-statistic Lipschitz constant across the rated samples, reported under Condition 3
    const bool rate_coupling =
        input.coupling == CouplingOperatorKind::RateOfM || input.coupling == CouplingOperatorKind::RelativeRate;
    if (rated.size() >= 2 && rep.log_shift && rate_coupling) {
        try {
            auto stat = [&](std::size_t i) {
                const auto eig = clamp_psd(symmetric_eigendecompose(gram(path.jacobians[i])));
                LogShiftOptions opt;
                opt.min_population = th.min_population;
                DenseMatrix op = rate_of_gram(path.jacobians[i], path.rates[i]);
                if (input.coupling == CouplingOperatorKind::RelativeRate) op = relative_rate(eig, op, default_eigen_floor(eig));
                return log_bin_couplings(eig, op, rep.log_shift->grid, opt).couplings;
            };
            const std::size_t a = rated.front(), b = rated.back();
            const double dt = path.jacobians[b].time() - path.jacobians[a].time();
            if (dt > 0)
                rep.conditions[2].details["bin_statistic_lipschitz"] = (stat(b) - stat(a)).cwiseAbs().maxCoeff() / dt;
        } catch (const Error& e) {
            rep.conditions[2].warnings.push_back(std::string("bin-statistic Lipschitz estimate skipped: ") + e.what());
        }
    }
    return rep;
}

nlohmann::json to_json(const ConditionThresholds& th)
{
    return {{"bandwidth", th.bandwidth},
            {"bandedness", th.bandedness},
            {"incoherence_tail", th.incoherence_tail},
            {"gronwall_tol", th.gronwall_tol},
            {"path_bound", th.path_bound},
            {"log_shift", th.log_shift},
            {"min_population", th.min_population},
            {"weight_base", th.weight_base},
            {"window_bins", th.window_bins},
            {"quantile", th.quantile}};
}

nlohmann::json to_json(const ConditionReport& report)
{
    nlohmann::json j;
    j["version"] = ConditionReport::version;
    j["thresholds"] = to_json(report.thresholds);
    j["provenance"] = report.provenance;
    j["all_pass"] = report.all_pass();
    j["conditions"] = nlohmann::json::array();
    for (std::size_t i = 0; i < report.conditions.size(); ++i) {
        const auto& c = report.conditions[i];
        j["conditions"].push_back({{"index", i + 1},
                                   {"name", c.name},
                                   {"score", json_number(c.score)},
                                   {"threshold", c.threshold},
                                   {"pass", c.pass},
                                   {"warnings", c.warnings},
                                   {"details", c.details}});
    }
    return j;
}

void write_bandedness_csv(std::ostream& out, const BandednessReport& report)
{
    out << "K,block,r\n";
    for (const auto& e : report.entries)
        for (std::size_t l = 0; l < e.residual.size(); ++l)
            if (!std::isnan(e.residual[l])) out << e.K << ',' << l << ',' << format_real(e.residual[l]) << '\n';
}

void write_envelope_csv(std::ostream& out, const IncoherenceReport& report)
{
    out << "t,k,u_k,U\n";
    for (std::size_t i = 0; i < report.times.size(); ++i)
        for (std::size_t k = 0; k < report.envelope[i].size(); ++k)
            out << format_real(report.times[i]) << ',' << k << ',' << format_real(report.envelope[i][k]) << ','
                << format_real(report.weighted[i]) << '\n';
}

void write_couplings_csv(std::ostream& out, const LogShiftReport* report)
{
    out << "i,j,s_i,s_j,K_ij,kernel\n";
    if (!report) return;
    const auto W = report->couplings.rows();
    for (Eigen::Index i = 0; i < W; ++i)
        for (Eigen::Index j = 0; j < W; ++j)
            out << i << ',' << j << ',' << format_real(report->grid.center_s(report->grid.window_lo() + static_cast<int>(i)))
                << ',' << format_real(report->grid.center_s(report->grid.window_lo() + static_cast<int>(j))) << ','
                << format_real(report->couplings(i, j)) << ','
                << format_real(report->fit.kernel[static_cast<std::size_t>(j - i + W - 1)]) << '\n';
}

void write_path_norms_csv(std::ostream& out, const PathNorms& norms)
{
    out << "t,J_op,Jdot_op\n";
    for (std::size_t i = 0; i < norms.times.size(); ++i) {
        out << format_real(norms.times[i]) << ',' << format_real(norms.j_norm[i]) << ',';
        if (std::isfinite(norms.jdot_norm[i])) out << format_real(norms.jdot_norm[i]);
        out << '\n';
    }
}

}  // namespace grsd
