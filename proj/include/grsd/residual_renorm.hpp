#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "grsd/condition_diagnostics.hpp"
#include "grsd/learning_config.hpp"

namespace grsd {

struct ResidualChainTrace {
    std::vector<Vector> directions;  // u_0 .. u_L (empty when not kept)
    std::vector<double> increments;  // delta_1 .. delta_L
    double accumulated = 0.0;        // S_L = sum (delta - mu), running
    double centering = 0.0;          // mu
    double variance = 0.0;           // sample variance of the increments
};

ResidualChainTrace run_direction_chain(const ResidualStack& stack, const Vector& u0, int L, double centering = 0.0,
                                       bool keep_directions = true);

struct ChainEnsembleSpec {
    int n = 8;
    double epsilon = 0.1;
    int members = 4096;
    int depth = 100;
    std::uint64_t seed = 0;
    int threads = 1;
};

// Seed of member m's residual stack; the streaming chain reads the same
// generator stream as make_residual_stack(n, depth + 1, epsilon, seed).
std::uint64_t chain_member_seed(std::uint64_t master, int member);

struct ChainEnsemble {
    std::vector<double> sums;  // raw sum of increments per member
    double mean_increment = 0.0;
    double mean_square_increment = 0.0;
    double increment_variance = 0.0;
    long long steps = 0;
};

ChainEnsemble run_chain_ensemble(const ChainEnsembleSpec& spec);

double standard_normal_cdf(double x);
// Exact Kolmogorov-Smirnov distance of already standardised samples to N(0,1).
double ks_distance_to_normal(std::vector<double> z);
// Standardises the accumulated sums with the ensemble mean and spread.
double berry_esseen_distance(std::span<const double> sums);
double berry_esseen_distance(std::span<const ResidualChainTrace> traces);

struct MixingSpec {
    int n = 8;
    double epsilon = 0.1;
    int members = 4096;
    int max_layers = 20000;
    std::uint64_t seed = 0;
    bool uniform_start = false;
    int threads = 1;
};

struct MixingEstimate {
    std::vector<double> distance;  // d(l), l = 0 .. last simulated layer
    std::optional<int> tau;
    double eta = 0.0;
    double rate = 0.0;             // fitted exponential decay rate of d
    double c2_estimate = 0.0;      // tau * eps^2 / log(1/eta)
    bool mixed = false;
};

double second_moment_distance(const DenseMatrix& directions);  // rows are unit vectors
MixingEstimate mixing_time(const MixingSpec& spec, double eta);

struct DepthThreshold {
    double eta = 0.0, epsilon = 0.0, c1 = 1.0, c2 = 1.0;
    double branch_variance = 0.0;  // C1 / (eps^2 eta^2)
    double branch_mixing = 0.0;    // (C2 / eps^2) log(1/eta)
    long long l_min = 0;
};

DepthThreshold depth_threshold(double epsilon, double eta, double c1 = 1.0, double c2 = 1.0);

struct DilutionResult {
    DenseMatrix combined;             // (1/L) sum over layers
    DenseMatrix bulk;                 // (1/L) sum over layers >= l_star
    DenseMatrix boundary;             // (1/L) sum over layers < l_star
    double bulk_err = 0.0;
    double combined_err = 0.0;
    double boundary_contribution = 0.0;  // sup-norm of `boundary`
    double coupling_bound = 0.0;         // C_K: largest per-layer |K_ij|
    double boundary_bound = 0.0;         // C_K l_star / L
    double additivity_discrepancy = 0.0; // vs a direct report on the assembled operator, if given
    int layers = 0;
};

DilutionResult depth_average_dilution(std::span<const LogShiftReport> layer_reports, int l_star,
                                      const LogShiftReport* assembled = nullptr);

}  // namespace grsd
