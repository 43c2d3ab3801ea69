#pragma once

#include <span>
#include <vector>

#include "grsd/gradient_flow.hpp"
#include "grsd/learning_config.hpp"
#include "grsd/spectral_core.hpp"

namespace grsd {

struct BandednessEntry {
    int K = 0;
    std::vector<double> residual;  // r_l(K) per block
    std::vector<char> rank_deficient;
    bool any_rank_deficient() const;
    double max_residual() const;
};

// Projection onto span{J^(m) : |m-l| <= K} through a column-pivoted QR; a
// numerically rank-deficient span is projected onto its revealed rank and
// flagged.
BandednessEntry bandedness_residual(const BlockJacobian& blocks, const BlockJacobian& rate, int K,
                                    std::span<const int> only_blocks = {});

struct DecayFit {
    double prefactor = 0.0;
    double rate = 0.0;  // r(K) ~ prefactor * exp(-rate K)
    int points = 0;
    bool valid = false;
};

struct BandednessReport {
    std::vector<int> Ks;
    std::vector<BandednessEntry> entries;  // one per K
    std::vector<double> deltas;
    std::vector<int> effective_range;      // K_delta per delta, -1 if never reached
    DecayFit decay;

    std::vector<double> max_residual() const;
};

struct BandednessOptions {
    std::vector<int> Ks;
    std::vector<int> blocks;  // empty = all
    std::vector<double> deltas{1e-3};
    double fit_lo = 1e-11;
    double fit_hi = 1e-2;
};

BandednessReport bandedness_profile(const BlockJacobian& blocks, const BlockJacobian& rate,
                                    const BandednessOptions& options);

DecayFit fit_exponential_decay(std::span<const int> k, std::span<const double> r, double lo, double hi);

// C_A = max_l sum_p ||A_lp||_op from the least-squares coefficients.
double coupling_bound(const BlockJacobian& blocks, const BlockJacobian& rate, int K);

struct IncoherenceReport {
    std::vector<double> times;
    std::vector<std::vector<double>> envelope;  // u_k(t), k = 0..L-1
    std::vector<double> weighted;               // U(t)
    double weight_base = 0.5;
    double growth_estimate = 0.0;               // C_rho from the sampled log-slopes
    double margin = 0.0;                        // Gronwall margin at growth_estimate
};

IncoherenceReport incoherence_envelope(std::span<const BlockJacobian> blocks_over_time, double rho_w = 0.5);
double gronwall_constant(double coupling_norm, int K, double rho_w);
double gronwall_margin(const IncoherenceReport& report, double growth);

struct PathNorms {
    double sup_j = 0.0;
    double sup_jdot = 0.0;
    double c_j = 0.0;
    bool diverged = false;
    int samples = 0;
    std::vector<double> times, j_norm, jdot_norm;  // jdot_norm NaN where no rate exists
};

PathNorms controlled_path_norms(const Trajectory& trajectory);
PathNorms controlled_path_norms(std::span<const BlockJacobian> jacobians, std::span<const BlockJacobian> rates,
                                bool diverged = false);

enum class CouplingStatistic { SquaredMean, LinearMean };

struct LogShiftOptions {
    double gap_floor = -1.0;  // negative: one bin width
    CouplingStatistic statistic = CouplingStatistic::SquaredMean;
    bool exclude_self_pairs = true;
    int min_population = 2;
    double eigen_floor = 0.0;  // 0: 1e-12 * lambda_max
};

struct OmegaStats {
    std::size_t pairs = 0;
    double max_abs = 0.0;
    double mean_square = 0.0;
    bool all_finite = true;
};

struct ToeplitzFit {
    std::vector<double> kernel;  // offsets -(W-1) .. W-1
    double error = 0.0;
};

ToeplitzFit fit_toeplitz(const DenseMatrix& k);

struct LogShiftReport {
    LogBinGrid grid;
    DenseMatrix couplings;       // window x window
    ToeplitzFit fit;
    std::vector<int> population; // per window bin
    std::vector<int> merged;     // window-relative indices that borrowed a neighbour
    bool low_population = false;
    OmegaStats omega;
    CouplingStatistic statistic = CouplingStatistic::SquaredMean;

    double error() const { return fit.error; }
};

LogShiftReport log_bin_couplings(const SymmetricEigenSystem& eig, const DenseMatrix& coupling, const LogBinGrid& grid,
                                 const LogShiftOptions& options = {});

}  // namespace grsd
