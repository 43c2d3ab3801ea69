#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "grsd/spectral_core.hpp"

namespace grsd {

struct ShellEnergies {
    std::vector<double> energy;  // per bin
    double excluded = 0.0;       // modes below the floor or outside the grid
    double total = 0.0;          // ||e||^2
};

ShellEnergies shell_energies(const SymmetricEigenSystem& eig, const Vector& error_vector, const LogBinGrid& grid,
                             double floor);
ShellEnergies shell_energies(const SymmetricEigenSystem& eig, const Vector& error_vector, const LogBinGrid& grid);

class ShellEnergySeries {
public:
    // energies[i][alpha] at times[i]
    ShellEnergySeries(LogBinGrid grid, std::vector<double> times, std::vector<std::vector<double>> energies,
                      double jump_guard = 0.5);

    const LogBinGrid& grid() const { return grid_; }
    const std::vector<double>& times() const { return times_; }
    const std::vector<std::vector<double>>& energies() const { return energies_; }
    std::size_t samples() const { return times_.size(); }
    double density(std::size_t i, int bin) const;

private:
    LogBinGrid grid_;
    std::vector<double> times_;
    std::vector<std::vector<double>> energies_;
};

struct DissipationModel {
    enum class Kind { Zero, Linear } kind = Kind::Zero;
    double gamma = 0.0;

    static DissipationModel zero() { return {}; }
    static DissipationModel linear(double gamma);
    double operator()(double energy) const { return kind == Kind::Linear ? gamma * energy : 0.0; }
    std::string name() const;
};

struct ShellFluxSeries {
    std::vector<double> times;
    std::vector<std::vector<double>> dE_dt;        // [i][alpha]
    std::vector<std::vector<double>> flux_lower;   // F_{alpha-1/2}; upper edge of alpha is flux_lower[alpha+1], top is 0
    std::vector<std::vector<double>> dissipation;  // D_alpha
    DissipationModel model;

    double flux_upper(std::size_t i, int bin) const;
    // max over samples and bins with lo <= alpha <= hi of the balance residual
    double balance_residual(int lo, int hi) const;
    double max_abs_rate() const;
};

// Three-point derivative weights: central in the interior, one-sided second
// order at the ends; valid for non-uniform spacing.
std::vector<std::vector<double>> time_derivative(const std::vector<double>& t,
                                                 const std::vector<std::vector<double>>& values);

ShellFluxSeries invert_boundary_fluxes(const ShellEnergySeries& series, const DissipationModel& model);

struct VelocityField {
    std::vector<double> times;
    std::vector<double> lambda;             // geometric bin centres
    std::vector<std::vector<double>> v;     // [i][alpha]
    std::vector<std::vector<char>> defined; // [i][alpha]
};

VelocityField velocity_field(const ShellFluxSeries& flux, const ShellEnergySeries& series,
                             double density_floor_rel = 1e-10);

struct VelocitySample {
    double lambda;
    double v;
};

struct PowerLawFit {
    double exponent = 0.0;
    std::vector<double> coefficient;  // one per time (a single entry for a static fit)
    double r2 = 0.0;
    std::vector<double> residuals;    // log-space, per sample used
    double sign = 1.0;
    double window_lambda_lo = 0.0, window_lambda_hi = 0.0;
    int window_lo = 0, window_hi = 0;
    std::string dissipation = "zero";
};

// Fits samples whose lambda falls in the window bins of `window`.
PowerLawFit fit_power_law(std::span<const VelocitySample> samples, const LogBinGrid& window);
// Common exponent with a per-time coefficient over window bins where v is defined.
PowerLawFit fit_power_law_series(const VelocityField& field, const LogBinGrid& window,
                                 const std::string& dissipation = "zero");
// One fit per contiguous same-sign run of window samples (each needs >= 3 points).
std::vector<PowerLawFit> fit_power_law_by_sign(std::span<const VelocitySample> samples, const LogBinGrid& window);

std::string to_json(const PowerLawFit& fit);

struct SampledField {
    std::vector<double> s;         // increasing log-eigenvalue coordinates
    std::vector<double> t;         // increasing positive times; a single entry means a static field
    std::vector<std::vector<double>> values;  // [time][s]
};

struct RigidityResult {
    double score = 0.0;
    double fitted_exponent = 0.0;  // gamma_J - gamma_eps
    int comparisons = 0;
};

RigidityResult log_shift_rigidity_test(const SampledField& field, std::span<const double> shifts, double time_rescale);

void write_shell_csv(std::ostream& out, const ShellEnergySeries& series, const ShellFluxSeries& flux,
                     const VelocityField& field);

}  // namespace grsd
