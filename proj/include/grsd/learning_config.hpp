#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "grsd/spectral_core.hpp"

namespace grsd {

class BlockJacobian {
public:
    BlockJacobian() = default;
    BlockJacobian(std::vector<DenseMatrix> blocks, double time = 0.0);

    const std::vector<DenseMatrix>& blocks() const { return blocks_; }
    const DenseMatrix& block(int l) const { return blocks_.at(static_cast<std::size_t>(l)); }
    int count() const { return static_cast<int>(blocks_.size()); }
    Eigen::Index rows() const { return blocks_.empty() ? 0 : blocks_.front().rows(); }
    Eigen::Index total_cols() const;
    std::vector<Eigen::Index> column_offsets() const;
    double time() const { return time_; }

    DenseMatrix concatenated() const;
    // Blocks l-K..l+K (clipped), side by side.
    DenseMatrix neighbourhood(int l, int K) const;
    bool conformal_with(const BlockJacobian& other) const;

private:
    std::vector<DenseMatrix> blocks_;
    double time_ = 0.0;
};

class IncoherenceProfile {
public:
    IncoherenceProfile() = default;
    // tail[k-1] is the bound for block distance k; distances past the list get 0.
    explicit IncoherenceProfile(std::vector<double> tail, bool enforce_nonincreasing = false);
    static IncoherenceProfile geometric(double first, double ratio, int k_max);

    double at(int k) const;
    double summability_bound() const;
    const std::vector<double>& tail() const { return tail_; }

private:
    std::vector<double> tail_;
};

BlockJacobian make_incoherent_blocks(int n_f, std::span<const int> block_dims, const IncoherenceProfile& profile,
                                     std::uint64_t seed);

// Largest cross-block Gram norm per distance k = 1..L-1.
std::vector<double> cross_gram_envelope(const BlockJacobian& j);

struct ResidualStack {
    double epsilon = 0.0;
    double g_max = 0.0;  // largest measured ||G_k||_op
    std::uint64_t seed = 0;
    int depth = 0;                   // L; propagators A_1 .. A_{L-1}
    std::vector<DenseMatrix> layers; // layers[k-1] = G_k

    Eigen::Index dim() const { return layers.empty() ? 0 : layers.front().rows(); }
    int propagator_count() const { return static_cast<int>(layers.size()); }
    DenseMatrix propagator(int k) const;  // A_k = I + eps G_k, 1-based
};

// G_k are consecutive n x n draws (variance 1/n) from one stream seeded by
// `seed`; a streaming chain reading the same stream sees identical layers.
ResidualStack make_residual_stack(int n, int depth, double epsilon, std::uint64_t seed);
ResidualStack make_residual_stack(std::vector<DenseMatrix> generators, double epsilon);

DenseMatrix residual_layer_jacobian(const ResidualStack& stack, int ell, const DenseMatrix& loss_grad,
                                    const DenseMatrix& branch_jac);
// All layers at once via shared suffix products; branch_jacs[l-1] is layer l.
std::vector<DenseMatrix> residual_layer_jacobians(const ResidualStack& stack, const DenseMatrix& loss_grad,
                                                  std::span<const DenseMatrix> branch_jacs);

DenseMatrix assemble_additive_M(std::span<const DenseMatrix> layer_jacobians);

struct SsmSpec {
    int state_dim = 4;
    int input_dim = 1;
    int output_dim = 4;
    int horizon = 32;
    double rho = 0.9;
    bool scalar_transition = false;  // A(t) = rho I instead of rho Q_t
    int window = 1;                  // time steps per parameter block
};

struct StableSSM {
    SsmSpec spec;
    std::vector<DenseMatrix> A;  // per time step, state x state
    std::vector<DenseMatrix> B;  // per time step, state x input (the trained parameters)
    std::vector<DenseMatrix> C;  // per time step, output x state
    std::vector<Vector> inputs;  // u_t
    double rho = 0.0;
    double prefactor = 1.0;      // C_A
};

StableSSM make_stable_ssm(const SsmSpec& spec, std::uint64_t seed, bool verify = true);

// sup_t ||A(t+k) ... A(t+1)||_op for k = 0..k_max
std::vector<double> propagator_norms(const StableSSM& ssm, int k_max);
void verify_stability(const StableSSM& ssm, int k_max);
int stability_horizon(double rho);
// Smallest k whose propagator norm bound drops to delta; -1 if never within k_max.
int effective_range(const StableSSM& ssm, double delta, int k_max);

struct SsmUnroll {
    BlockJacobian jacobian;
    BlockJacobian rate;  // empty unless a transition velocity was supplied
};

BlockJacobian unroll_ssm_jacobian(const StableSSM& ssm, int horizon, bool check_stability = true);
// Same unroll plus dJ/dt along a training-time velocity of the transitions.
SsmUnroll unroll_ssm_with_rate(const StableSSM& ssm, int horizon, std::span<const DenseMatrix> transition_rate,
                               bool check_stability = true);

// Evolution dJ^(l)/dt = sum_{|p-l|<=K} J^(p) A_lp with constant coefficients.
struct BandedEvolution {
    int bandwidth = 1;
    // coefficients[l][p - l + K] is A_lp (d_p x d_l), empty matrix when absent
    std::vector<std::vector<DenseMatrix>> coefficients;

    BlockJacobian rate(const BlockJacobian& j) const;
    double coupling_norm() const;  // C_A = max_l sum_p ||A_lp||_op
};

BandedEvolution make_banded_evolution(std::span<const int> block_dims, int bandwidth, double scale,
                                      std::uint64_t seed);

struct BandedPath {
    std::vector<BlockJacobian> jacobians;
    std::vector<BlockJacobian> rates;
};

BandedPath simulate_banded_evolution(const BlockJacobian& initial, const BandedEvolution& evo, double horizon,
                                     double step, int samples);

}  // namespace grsd
