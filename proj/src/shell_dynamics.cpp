#include "grsd/shell_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "grsd/error.hpp"

namespace grsd {

ShellEnergies shell_energies(const SymmetricEigenSystem& eig, const Vector& error_vector, const LogBinGrid& grid,
                             double floor)
{
    if (error_vector.size() != eig.dim())
        fail(ErrorKind::DimensionMismatch, "error vector length " + std::to_string(error_vector.size()) +
                                               " vs eigensystem dimension " + std::to_string(eig.dim()));
    if (!(floor > 0)) fail(ErrorKind::InvalidArgument, "eigenvalue floor must be positive");
    ShellEnergies out;
    out.energy.assign(static_cast<std::size_t>(grid.bins()), 0.0);
    const Vector coeff = eig.eigenvectors.transpose() * error_vector;
    out.total = error_vector.squaredNorm();
    for (Eigen::Index u = 0; u < eig.dim(); ++u) {
        const double e = coeff(u) * coeff(u);
        const double lam = eig.eigenvalues(u);
        const auto b = lam >= floor ? grid.bin_of(std::log(lam)) : std::nullopt;
        if (b)
            out.energy[static_cast<std::size_t>(*b)] += e;
        else
            out.excluded += e;
    }
    return out;
}

ShellEnergies shell_energies(const SymmetricEigenSystem& eig, const Vector& error_vector, const LogBinGrid& grid)
{
    return shell_energies(eig, error_vector, grid, default_eigen_floor(eig));
}

ShellEnergySeries::ShellEnergySeries(LogBinGrid grid, std::vector<double> times,
                                     std::vector<std::vector<double>> energies, double jump_guard)
    : grid_(std::move(grid)), times_(std::move(times)), energies_(std::move(energies))
{
    if (times_.size() != energies_.size()) fail(ErrorKind::DimensionMismatch, "one energy row per time sample");
    for (std::size_t i = 0; i < times_.size(); ++i) {
        if (i > 0 && !(times_[i] > times_[i - 1])) fail(ErrorKind::InvalidArgument, "times must be strictly increasing");
        if (static_cast<int>(energies_[i].size()) != grid_.bins())
            fail(ErrorKind::GridMismatch, "energy row " + std::to_string(i) + " does not match the grid");
        for (double e : energies_[i])
            if (!(e >= 0) || !std::isfinite(e)) fail(ErrorKind::NonFinite, "shell energies must be finite and >= 0");
    }
    double scale = 0;
    std::vector<double> totals;
    for (const auto& row : energies_) {
        double s = 0;
        for (double e : row) s += e;
        totals.push_back(s);
        scale = std::max(scale, s);
    }
    for (std::size_t i = 1; i < totals.size(); ++i)
        if (std::abs(totals[i] - totals[i - 1]) > jump_guard * scale)
            fail(ErrorKind::InvalidArgument, "total shell energy jumps between samples " + std::to_string(i - 1) +
                                                 " and " + std::to_string(i));
}

double ShellEnergySeries::density(std::size_t i, int bin) const
{
    return energies_.at(i).at(static_cast<std::size_t>(bin)) / grid_.width_lambda(bin);
}

DissipationModel DissipationModel::linear(double gamma)
{
    if (!(gamma >= 0)) fail(ErrorKind::InvalidArgument, "dissipation rate must be >= 0");
    return {Kind::Linear, gamma};
}

std::string DissipationModel::name() const
{
    if (kind == Kind::Zero) return "zero";
    return "linear(" + format_real(gamma) + ")";
}

double ShellFluxSeries::flux_upper(std::size_t i, int bin) const
{
    const auto& row = flux_lower.at(i);
    return static_cast<std::size_t>(bin + 1) < row.size() ? row[static_cast<std::size_t>(bin + 1)] : 0.0;
}

double ShellFluxSeries::balance_residual(int lo, int hi) const
{
    double r = 0;
    for (std::size_t i = 0; i < times.size(); ++i)
        for (int a = lo; a <= hi; ++a) {
            const auto k = static_cast<std::size_t>(a);
            r = std::max(r, std::abs(dE_dt[i][k] - (flux_lower[i][k] - flux_upper(i, a)) + dissipation[i][k]));
        }
    return r;
}

double ShellFluxSeries::max_abs_rate() const
{
    double m = 0;
    for (const auto& row : dE_dt)
        for (double x : row) m = std::max(m, std::abs(x));
    return m;
}

std::vector<std::vector<double>> time_derivative(const std::vector<double>& t,
                                                 const std::vector<std::vector<double>>& values)
{
    const std::size_t n = t.size();
    if (n < 3) fail(ErrorKind::TooFewSamples, "derivatives need >= 3 time samples, got " + std::to_string(n));
    std::vector<std::vector<double>> d(n, std::vector<double>(values.front().size(), 0.0));
    auto combine = [&](std::size_t out, std::size_t i0, double w0, std::size_t i1, double w1, std::size_t i2, double w2) {
        for (std::size_t k = 0; k < d[out].size(); ++k)
            d[out][k] = w0 * values[i0][k] + w1 * values[i1][k] + w2 * values[i2][k];
    };
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double h1 = t[i] - t[i - 1], h2 = t[i + 1] - t[i];
        combine(i, i - 1, -h2 / (h1 * (h1 + h2)), i, (h2 - h1) / (h1 * h2), i + 1, h1 / (h2 * (h1 + h2)));
    }
    {
        const double h1 = t[1] - t[0], h2 = t[2] - t[1];
        combine(0, 0, -(2 * h1 + h2) / (h1 * (h1 + h2)), 1, (h1 + h2) / (h1 * h2), 2, -h1 / (h2 * (h1 + h2)));
    }
    {
        const double h1 = t[n - 2] - t[n - 3], h2 = t[n - 1] - t[n - 2];
        combine(n - 1, n - 3, h2 / (h1 * (h1 + h2)), n - 2, -(h1 + h2) / (h1 * h2), n - 1,
                (2 * h2 + h1) / (h2 * (h1 + h2)));
    }
    return d;
}

ShellFluxSeries invert_boundary_fluxes(const ShellEnergySeries& series, const DissipationModel& model)
{
    if (series.samples() < 3)
        fail(ErrorKind::TooFewSamples, "flux inversion needs >= 3 time samples, got " + std::to_string(series.samples()));
    ShellFluxSeries out;
    out.model = model;
    out.times = series.times();
    out.dE_dt = time_derivative(series.times(), series.energies());
    const int bins = series.grid().bins();
    for (std::size_t i = 0; i < series.samples(); ++i) {
        std::vector<double> d(static_cast<std::size_t>(bins)), f(static_cast<std::size_t>(bins));
        double acc = 0;  // zero flux above the top shell
        for (int a = bins - 1; a >= 0; --a) {
            const auto k = static_cast<std::size_t>(a);
            d[k] = model(series.energies()[i][k]);
            acc += out.dE_dt[i][k] + d[k];
            f[k] = acc;
        }
        out.dissipation.push_back(std::move(d));
        out.flux_lower.push_back(std::move(f));
    }
    return out;
}

VelocityField velocity_field(const ShellFluxSeries& flux, const ShellEnergySeries& series, double density_floor_rel)
{
    if (flux.times.size() != series.samples()) fail(ErrorKind::DimensionMismatch, "flux and energy series disagree");
    const int bins = series.grid().bins();
    VelocityField out;
    out.times = series.times();
    for (int a = 0; a < bins; ++a) out.lambda.push_back(series.grid().center_lambda(a));
    for (std::size_t i = 0; i < series.samples(); ++i) {
        std::vector<double> eps(static_cast<std::size_t>(bins));
        double top = 0;
        for (int a = 0; a < bins; ++a) {
            eps[static_cast<std::size_t>(a)] = series.density(i, a);
            top = std::max(top, eps[static_cast<std::size_t>(a)]);
        }
        const double floor = density_floor_rel * top;
        std::vector<double> v(static_cast<std::size_t>(bins), std::numeric_limits<double>::quiet_NaN());
        std::vector<char> ok(static_cast<std::size_t>(bins), 0);
        bool any = false;
        for (int a = 0; a < bins; ++a) {
            const auto k = static_cast<std::size_t>(a);
            if (!(eps[k] > floor) || top == 0) continue;
            const double centre_flux = 0.5 * (flux.flux_lower[i][k] + flux.flux_upper(i, a));
            v[k] = centre_flux / eps[k];
            ok[k] = 1;
            any = true;
        }
        if (!any) fail(ErrorKind::AllBinsBelowFloor, "no shell above the density floor at sample " + std::to_string(i));
        out.v.push_back(std::move(v));
        out.defined.push_back(std::move(ok));
    }
    return out;
}

namespace {

struct LogPoint {
    double x, y;
    std::size_t group;
};

PowerLawFit fit_groups(const std::vector<LogPoint>& pts, std::size_t groups)
{
    std::vector<double> sx(groups, 0), sy(groups, 0);
    std::vector<int> cnt(groups, 0);
    for (const auto& p : pts) {
        sx[p.group] += p.x;
        sy[p.group] += p.y;
        ++cnt[p.group];
    }
    for (std::size_t g = 0; g < groups; ++g) {
        if (cnt[g] < (groups > 1 ? 2 : 3))
            fail(ErrorKind::InsufficientSamples, "time sample " + std::to_string(g) + " has " +
                                                     std::to_string(cnt[g]) + " usable velocities in the window");
        sx[g] /= cnt[g];
        sy[g] /= cnt[g];
    }
    double sxx = 0, sxy = 0, syy = 0;
    for (const auto& p : pts) {
        const double dx = p.x - sx[p.group], dy = p.y - sy[p.group];
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (!(sxx > 0)) fail(ErrorKind::InsufficientSamples, "all samples share one lambda");
    PowerLawFit fit;
    fit.exponent = sxy / sxx;
    double ssr = 0;
    for (std::size_t g = 0; g < groups; ++g) fit.coefficient.push_back(std::exp(sy[g] - fit.exponent * sx[g]));
    for (const auto& p : pts) {
        const double r = p.y - (sy[p.group] + fit.exponent * (p.x - sx[p.group]));
        fit.residuals.push_back(r);
        ssr += r * r;
    }
    fit.r2 = syy > 0 ? std::clamp(1.0 - ssr / syy, 0.0, 1.0) : 1.0;
    return fit;
}

double sign_of(double v)
{
    if (v > 0) return 1.0;
    if (v < 0) return -1.0;
    fail(ErrorKind::MixedSignVelocities, "zero velocity has no sign; it cannot enter a log-log fit");
}

void stamp_window(PowerLawFit& fit, const LogBinGrid& w)
{
    fit.window_lo = w.window_lo();
    fit.window_hi = w.window_hi();
    fit.window_lambda_lo = std::exp(w.lower_edge(w.window_lo()));
    fit.window_lambda_hi = std::exp(w.upper_edge(w.window_hi()));
}

bool in_window(const LogBinGrid& w, double lambda)
{
    if (!(lambda > 0)) return false;
    const auto b = w.bin_of(std::log(lambda));
    return b && w.in_window(*b);
}

}  // namespace

PowerLawFit fit_power_law(std::span<const VelocitySample> samples, const LogBinGrid& window)
{
    std::vector<LogPoint> pts;
    double sign = 0;
    for (const auto& s : samples) {
        if (!in_window(window, s.lambda)) continue;
        if (!std::isfinite(s.v)) fail(ErrorKind::NonFinite, "velocity sample is not finite");
        const double sg = sign_of(s.v);
        if (sign != 0 && sg != sign) fail(ErrorKind::MixedSignVelocities, "velocities change sign inside the window");
        sign = sg;
        pts.push_back({std::log(s.lambda), std::log(std::abs(s.v)), 0});
    }
    if (pts.size() < 3) fail(ErrorKind::InsufficientSamples, std::to_string(pts.size()) + " in-window samples; need 3");
    PowerLawFit fit = fit_groups(pts, 1);
    fit.sign = sign;
    stamp_window(fit, window);
    return fit;
}

PowerLawFit fit_power_law_series(const VelocityField& field, const LogBinGrid& window, const std::string& dissipation)
{
    std::vector<LogPoint> pts;
    double sign = 0;
    for (std::size_t i = 0; i < field.times.size(); ++i)
        for (int a = window.window_lo(); a <= window.window_hi(); ++a) {
            const auto k = static_cast<std::size_t>(a);
            if (k >= field.lambda.size() || !field.defined[i][k]) continue;
            const double sg = sign_of(field.v[i][k]);
            if (sign != 0 && sg != sign) fail(ErrorKind::MixedSignVelocities, "velocities change sign inside the window");
            sign = sg;
            pts.push_back({std::log(field.lambda[k]), std::log(std::abs(field.v[i][k])), i});
        }
    PowerLawFit fit = fit_groups(pts, field.times.size());
    fit.sign = sign;
    fit.dissipation = dissipation;
    stamp_window(fit, window);
    return fit;
}

std::vector<PowerLawFit> fit_power_law_by_sign(std::span<const VelocitySample> samples, const LogBinGrid& window)
{
    std::vector<VelocitySample> in;
    for (const auto& s : samples)
        if (in_window(window, s.lambda) && s.v != 0) in.push_back(s);
    std::sort(in.begin(), in.end(), [](const auto& a, const auto& b) { return a.lambda < b.lambda; });
    std::vector<PowerLawFit> fits;
    std::size_t start = 0;
    for (std::size_t i = 1; i <= in.size(); ++i) {
        if (i < in.size() && (in[i].v > 0) == (in[start].v > 0)) continue;
        if (i - start >= 3) {
            std::vector<LogPoint> pts;
            for (std::size_t j = start; j < i; ++j) pts.push_back({std::log(in[j].lambda), std::log(std::abs(in[j].v)), 0});
            PowerLawFit fit = fit_groups(pts, 1);
            fit.sign = in[start].v > 0 ? 1.0 : -1.0;
            stamp_window(fit, window);
            fit.window_lambda_lo = in[start].lambda;
            fit.window_lambda_hi = in[i - 1].lambda;
            fits.push_back(std::move(fit));
        }
        start = i;
    }
    return fits;
}

std::string to_json(const PowerLawFit& fit)
{
    std::ostringstream o;
    o << "{\"a\": " << format_real(fit.exponent) << ", \"c_series\": [";
    for (std::size_t i = 0; i < fit.coefficient.size(); ++i) o << (i ? ", " : "") << format_real(fit.coefficient[i]);
    o << "], \"r2\": " << format_real(fit.r2) << ", \"sign\": " << format_real(fit.sign)
      << ", \"window\": {\"bin_lo\": " << fit.window_lo << ", \"bin_hi\": " << fit.window_hi
      << ", \"lambda_lo\": " << format_real(fit.window_lambda_lo) << ", \"lambda_hi\": "
      << format_real(fit.window_lambda_hi) << "}, \"dissipation_model\": \"" << fit.dissipation << "\"}";
    return o.str();
}

namespace {

class FieldInterpolator {
public:
    explicit FieldInterpolator(const SampledField& f) : f_(f)
    {
        if (f.s.size() < 2 || f.t.empty() || f.values.size() != f.t.size())
            fail(ErrorKind::InvalidArgument, "sampled field needs >= 2 s nodes and one value row per time");
        for (std::size_t i = 1; i < f.s.size(); ++i)
            if (!(f.s[i] > f.s[i - 1])) fail(ErrorKind::InvalidArgument, "s nodes must increase");
        for (std::size_t j = 0; j < f.t.size(); ++j) {
            if (!(f.t[j] > 0) || (j && !(f.t[j] > f.t[j - 1])))
                fail(ErrorKind::InvalidArgument, "times must be positive and increasing");
            if (f.values[j].size() != f.s.size()) fail(ErrorKind::DimensionMismatch, "value row length");
            log_t_.push_back(std::log(f.t[j]));
        }
        bool pos = true, neg = true;
        for (const auto& row : f.values)
            for (double v : row) {
                if (!std::isfinite(v)) fail(ErrorKind::NonFinite, "field value is not finite");
                pos = pos && v > 0;
                neg = neg && v < 0;
            }
        sign_ = pos ? 1.0 : neg ? -1.0 : 0.0;
    }

    bool static_field() const { return f_.t.size() == 1; }
    bool s_in_range(double s) const { return s >= f_.s.front() - 1e-12 && s <= f_.s.back() + 1e-12; }
    bool t_in_range(double t) const
    {
        if (static_field()) return true;
        const double lt = std::log(t);
        return lt >= log_t_.front() - 1e-12 && lt <= log_t_.back() + 1e-12;
    }

    double operator()(double s, double t) const
    {
        const auto [i, ws] = locate(f_.s, s);
        if (static_field()) return blend(node(0, i), node(0, i + 1), ws);
        const auto [j, wt] = locate(log_t_, std::log(t));
        const double a = blend(node(j, i), node(j, i + 1), ws);
        const double b = blend(node(j + 1, i), node(j + 1, i + 1), ws);
        return finish(a * (1 - wt) + b * wt);
    }

private:
    static std::pair<std::size_t, double> locate(const std::vector<double>& x, double v)
    {
        auto it = std::upper_bound(x.begin(), x.end(), v);
        std::size_t i = it == x.begin() ? 0 : static_cast<std::size_t>(it - x.begin()) - 1;
        i = std::min(i, x.size() - 2);
        return {i, std::clamp((v - x[i]) / (x[i + 1] - x[i]), 0.0, 1.0)};
    }
    double node(std::size_t j, std::size_t i) const
    {
        const double v = f_.values[j][i];
        return sign_ != 0 ? std::log(std::abs(v)) : v;
    }
    double blend(double a, double b, double w) const
    {
        const double r = a * (1 - w) + b * w;
        return static_field() ? finish(r) : r;
    }
    double finish(double r) const { return sign_ != 0 ? sign_ * std::exp(r) : r; }

    const SampledField& f_;
    std::vector<double> log_t_;
    double sign_ = 0;
};

}  // namespace

RigidityResult log_shift_rigidity_test(const SampledField& field, std::span<const double> shifts, double time_rescale)
{
    const FieldInterpolator f(field);
    struct Pair {
        double tau, lhs, rhs;
    };
    std::vector<Pair> pairs;
    for (double tau : shifts) {
        std::size_t found = 0;
        for (double s : field.s) {
            if (!f.s_in_range(s + tau)) continue;
            for (double t : field.t) {
                const double t2 = f.static_field() ? t : std::exp(time_rescale * tau) * t;
                if (!f.t_in_range(t2)) continue;
                pairs.push_back({tau, f(s + tau, t), f(s, t2)});
                ++found;
            }
        }
        if (!found)
            fail(ErrorKind::RangeExceeded, "shift " + format_real(tau) + " leaves the sampled (s, t) range everywhere");
    }
    double num = 0, den = 0;
    for (const auto& p : pairs)
        if (p.lhs != 0 && p.rhs != 0 && (p.lhs > 0) == (p.rhs > 0)) {
            num += p.tau * (std::log(std::abs(p.lhs)) - std::log(std::abs(p.rhs)));
            den += p.tau * p.tau;
        }
    RigidityResult out;
    out.fitted_exponent = den > 0 ? num / den : 0.0;
    out.comparisons = static_cast<int>(pairs.size());
    for (const auto& p : pairs) {
        const double pred = std::exp(out.fitted_exponent * p.tau) * p.rhs;
        const double scale = p.lhs != 0 ? std::abs(p.lhs) : std::max(std::abs(pred), std::numeric_limits<double>::min());
        out.score = std::max(out.score, std::abs(p.lhs - pred) / scale);
    }
    return out;
}

void write_shell_csv(std::ostream& out, const ShellEnergySeries& series, const ShellFluxSeries& flux,
                     const VelocityField& field)
{
    out << "t,alpha,lambda_center,E,eps,F_lower,D,v\n";
    const auto& g = series.grid();
    for (std::size_t i = 0; i < series.samples(); ++i)
        for (int a = 0; a < g.bins(); ++a) {
            const auto k = static_cast<std::size_t>(a);
            out << format_real(series.times()[i]) << ',' << a << ',' << format_real(g.center_lambda(a)) << ','
                << format_real(series.energies()[i][k]) << ',' << format_real(series.density(i, a)) << ','
                << format_real(flux.flux_lower[i][k]) << ',' << format_real(flux.dissipation[i][k]) << ',';
            if (field.defined[i][k]) out << format_real(field.v[i][k]);
            out << '\n';
        }
}

}  // namespace grsd
