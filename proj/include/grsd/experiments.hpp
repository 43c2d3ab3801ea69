#pragma once

#include <cstdint>
#include <vector>

#include "grsd/condition_suite.hpp"
#include "grsd/gradient_flow.hpp"
#include "grsd/residual_renorm.hpp"
#include "grsd/shell_dynamics.hpp"

namespace grsd {

// Transport with velocity c * lambda^a applied to a Gaussian bump in
// s = log lambda. Mode energies are exact cell integrals along
// characteristics, so the only discretisation error left in the pipeline is
// the time derivative and the bin-average of the density.
struct TransportSpec {
    double exponent = 0.5;
    double coefficient = 1.0;
    double s_lo = -7.0;
    double s_hi = 7.0;
    double h = 0.1;
    int modes_per_bin = 10;
    double bump_center = 0.0;
    double bump_width = 1.2;
    double window_half_width = 3.0;
    int time_samples = 5;
    double dt_fraction = 1e-3;
    DissipationModel dissipation = DissipationModel::zero();
};

struct TransportRun {
    ShellEnergySeries series;
    ShellFluxSeries flux;
    VelocityField field;
    PowerLawFit fit;
    LogBinGrid window;
    double balance_residual = 0.0;
    double max_rate = 0.0;
    double coefficient_mid = 0.0;  // c(t) at the middle sample
};

TransportRun run_manufactured_transport(const TransportSpec& spec);

struct LogShiftDepthSpec {
    int n = 128;
    double epsilon = 0.1;
    int window_bins = 8;
    double quantile = 0.1;
    int aspect = 2;
};

// Per-layer statistic of M = P M0 P^T with P a product of L residual
// propagators, measured against the boundary operator M0.
double boundary_anchored_log_shift_error(const LogShiftDepthSpec& spec, int L, std::uint64_t seed);

struct DilutionSpec {
    int n = 64;
    double epsilon = 0.1;
    int l_star = 8;
    int window_bins = 8;
    double quantile = 0.1;
};

struct DilutionRun {
    DilutionResult result;
    double normalized_boundary = 0.0;  // boundary contribution * L / C_K
};

DilutionRun run_depth_dilution(const DilutionSpec& spec, int L, std::uint64_t seed);

struct SsmBandednessSpec {
    SsmSpec ssm{4, 1, 4, 160, 0.9, false, 1};
    int k_max = 110;
    int block = 0;
    double delta = 1e-3;
    double fit_lo = 1e-11;
    double fit_hi = 1e-2;
    bool check_stability = true;
};

BandednessReport ssm_bandedness(const SsmBandednessSpec& spec, std::uint64_t seed);

struct GronwallSpec {
    int n_f = 40;
    std::vector<int> block_dims{3, 3, 3, 3, 3, 3};
    int bandwidth = 1;
    double coefficient_scale = 0.3;
    double weight_base = 0.5;
    double horizon = 1.0;
    int samples = 21;
    double step = 1e-3;
};

struct GronwallRun {
    IncoherenceReport report;
    double coupling_norm = 0.0;   // measured C_A
    double growth_bound = 0.0;    // 2 C_A sum rho^-j
    double margin = 0.0;          // at growth_bound
};

GronwallRun run_gronwall_check(const GronwallSpec& spec, std::uint64_t seed);

struct KsSweepPoint {
    int depth = 0;
    double ks = 0.0;
    double mean_square_over_eps2 = 0.0;
};

struct KsSweep {
    std::vector<KsSweepPoint> points;
    double slope = 0.0;  // d log KS / d log L
};

KsSweep run_ks_sweep(const ChainEnsembleSpec& base, const std::vector<int>& depths);
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

SampledField power_law_field(double c, double a, const std::vector<double>& s, const std::vector<double>& t,
                             double lambda0 = 0.0);
SampledField log_time_field(const std::vector<double>& s, const std::vector<double>& t);
std::vector<double> linspace(double lo, double hi, int count);

// Residual stack trained along a straight parameter path G_k(t) = G_k + t Gdot_k.
struct ResidualPathSpec {
    int n = 64;
    int depth = 256;
    double epsilon = 0.1;
    int branch_width = 8;
    int samples = 3;
    double dt = 0.05;
};

JacobianPath residual_condition_path(const ResidualPathSpec& spec, std::uint64_t seed);

struct SsmPathSpec {
    SsmSpec ssm{4, 1, 4, 48, 0.9, false, 1};
    int samples = 3;
    double dt = 0.01;
};

JacobianPath ssm_condition_path(const SsmPathSpec& spec, std::uint64_t seed);

// One block evolving linearly in time.
JacobianPath single_block_path(int n_f, int width, int samples, double dt, std::uint64_t seed);

}  // namespace grsd
