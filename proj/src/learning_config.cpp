#include "grsd/learning_config.hpp"

#include <algorithm>
#include <cmath>

#include "grsd/error.hpp"
#include "grsd/rng.hpp"

namespace grsd {

BlockJacobian::BlockJacobian(std::vector<DenseMatrix> blocks, double time) : blocks_(std::move(blocks)), time_(time)
{
    if (blocks_.empty()) fail(ErrorKind::InvalidArgument, "a block Jacobian needs at least one block");
    const Eigen::Index rows = blocks_.front().rows();
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        if (blocks_[l].rows() != rows)
            fail(ErrorKind::DimensionMismatch, "block " + std::to_string(l) + " has " +
                                                   std::to_string(blocks_[l].rows()) + " rows, expected " +
                                                   std::to_string(rows));
        require_finite(blocks_[l], "Jacobian block " + std::to_string(l));
    }
}

Eigen::Index BlockJacobian::total_cols() const
{
    Eigen::Index c = 0;
    for (const auto& b : blocks_) c += b.cols();
    return c;
}

std::vector<Eigen::Index> BlockJacobian::column_offsets() const
{
    std::vector<Eigen::Index> off{0};
    for (const auto& b : blocks_) off.push_back(off.back() + b.cols());
    return off;
}

DenseMatrix BlockJacobian::concatenated() const
{
    DenseMatrix j(rows(), total_cols());
    Eigen::Index c = 0;
    for (const auto& b : blocks_) {
        j.middleCols(c, b.cols()) = b;
        c += b.cols();
    }
    return j;
}

DenseMatrix BlockJacobian::neighbourhood(int l, int K) const
{
    const int lo = std::max(0, l - K);
    const int hi = std::min(count() - 1, l + K);
    Eigen::Index cols = 0;
    for (int m = lo; m <= hi; ++m) cols += block(m).cols();
    DenseMatrix n(rows(), cols);
    Eigen::Index c = 0;
    for (int m = lo; m <= hi; ++m) {
        n.middleCols(c, block(m).cols()) = block(m);
        c += block(m).cols();
    }
    return n;
}

bool BlockJacobian::conformal_with(const BlockJacobian& other) const
{
    if (count() != other.count() || rows() != other.rows()) return false;
    for (int l = 0; l < count(); ++l)
        if (block(l).cols() != other.block(l).cols()) return false;
    return true;
}

IncoherenceProfile::IncoherenceProfile(std::vector<double> tail, bool enforce_nonincreasing) : tail_(std::move(tail))
{
    for (std::size_t k = 0; k < tail_.size(); ++k) {
        if (!(tail_[k] >= 0) || !std::isfinite(tail_[k]))
            fail(ErrorKind::InvalidArgument, "incoherence bound at distance " + std::to_string(k + 1) +
                                                 " must be finite and nonnegative");
        if (enforce_nonincreasing && k > 0 && tail_[k] > tail_[k - 1])
            fail(ErrorKind::InvalidArgument, "incoherence profile increases at distance " + std::to_string(k + 1));
    }
}

IncoherenceProfile IncoherenceProfile::geometric(double first, double ratio, int k_max)
{
    std::vector<double> t;
    double v = first;
    for (int k = 1; k <= k_max; ++k, v *= ratio) t.push_back(v);
    return IncoherenceProfile(std::move(t), ratio <= 1.0);
}

double IncoherenceProfile::at(int k) const
{
    if (k < 1) fail(ErrorKind::IndexOutOfRange, "incoherence distance must be >= 1");
    return static_cast<std::size_t>(k) <= tail_.size() ? tail_[static_cast<std::size_t>(k - 1)] : 0.0;
}

double IncoherenceProfile::summability_bound() const
{
    double s = 0;
    for (double e : tail_) s += e;
    return s;
}

std::vector<double> cross_gram_envelope(const BlockJacobian& j)
{
    std::vector<double> u(static_cast<std::size_t>(std::max(0, j.count() - 1)), 0.0);
    for (int l = 0; l < j.count(); ++l)
        for (int m = l + 1; m < j.count(); ++m) {
            const double v = operator_norm(j.block(l).transpose() * j.block(m));
            auto& slot = u[static_cast<std::size_t>(m - l - 1)];
            slot = std::max(slot, v);
        }
    return u;
}

namespace {

DenseMatrix truncated_identity(Eigen::Index rows, Eigen::Index cols)
{
    return DenseMatrix::Identity(rows, cols);
}

std::vector<DenseMatrix> mix_blocks(const std::vector<DenseMatrix>& base, const std::vector<double>& c)
{
    const int L = static_cast<int>(base.size());
    std::vector<DenseMatrix> out = base;
    for (int l = 0; l < L; ++l)
        for (int m = 0; m < L; ++m) {
            if (m == l) continue;
            const double w = c[static_cast<std::size_t>(std::abs(l - m) - 1)];
            if (w == 0.0) continue;
            out[static_cast<std::size_t>(l)] +=
                w * base[static_cast<std::size_t>(m)] * truncated_identity(base[m].cols(), base[l].cols());
        }
    return out;
}

}  // namespace

BlockJacobian make_incoherent_blocks(int n_f, std::span<const int> block_dims, const IncoherenceProfile& profile,
                                     std::uint64_t seed)
{
    if (n_f < 1 || block_dims.empty()) fail(ErrorKind::InvalidArgument, "need n_f >= 1 and at least one block");
    int total = 0;
    for (int d : block_dims) {
        if (d < 1) fail(ErrorKind::InvalidArgument, "block dimensions must be positive");
        total += d;
    }
    Rng rng(seed);
    const int L = static_cast<int>(block_dims.size());
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_f));
    if (L == 1) return BlockJacobian({gaussian_matrix(rng, n_f, block_dims[0], scale)});

    std::vector<DenseMatrix> base;
    if (total <= n_f) {
        // orthonormal columns split into blocks: exactly incoherent before mixing
        const DenseMatrix g = gaussian_matrix(rng, n_f, total, 1.0);
        Eigen::HouseholderQR<DenseMatrix> qr(g);
        const DenseMatrix q = qr.householderQ() * DenseMatrix::Identity(n_f, total);
        int c = 0;
        for (int d : block_dims) {
            base.push_back(q.middleCols(c, d));
            c += d;
        }
    } else {
        for (int d : block_dims) base.push_back(gaussian_matrix(rng, n_f, d, scale));
    }

    const double slack = 0.1;
    const double roundoff = 1e-12;  // orthonormal bases still leave ~1e-16 cross terms
    std::vector<double> bound(static_cast<std::size_t>(L - 1));
    std::vector<double> c(static_cast<std::size_t>(L - 1));
    for (int k = 1; k < L; ++k) {
        bound[static_cast<std::size_t>(k - 1)] = profile.at(k);
        c[static_cast<std::size_t>(k - 1)] = 0.5 * profile.at(k);
    }

    for (int iter = 0; iter < 200; ++iter) {
        const BlockJacobian j(mix_blocks(base, c));
        const auto env = cross_gram_envelope(j);
        bool ok = true;
        bool stuck = true;  // every violation sits at a distance with no mixing left to remove
        for (std::size_t k = 0; k < env.size(); ++k) {
            if (env[k] > bound[k] + roundoff) {
                ok = false;
                if (c[k] != 0.0) stuck = false;
                c[k] = iter > 60 ? 0.0 : 0.5 * c[k];
            }
        }
        if (ok) return j;
        if (stuck) {
            const auto base_env = cross_gram_envelope(BlockJacobian(base));
            for (std::size_t k = 0; k < base_env.size(); ++k)
                if (base_env[k] > bound[k] * (1.0 + slack) + roundoff)
                    fail(ErrorKind::InfeasibleProfile,
                         "unmixed blocks already have cross-Gram norm " + format_real(base_env[k]) +
                             " at distance " + std::to_string(k + 1) + " (bound " + format_real(bound[k]) + ")");
            return BlockJacobian(base);
        }
    }
    fail(ErrorKind::InfeasibleProfile, "mixing attenuation did not meet the profile");
}

DenseMatrix ResidualStack::propagator(int k) const
{
    if (k < 1 || k > propagator_count())
        fail(ErrorKind::IndexOutOfRange, "propagator index " + std::to_string(k) + " outside 1.." +
                                             std::to_string(propagator_count()));
    const auto& g = layers[static_cast<std::size_t>(k - 1)];
    return DenseMatrix::Identity(g.rows(), g.cols()) + epsilon * g;
}

ResidualStack make_residual_stack(int n, int depth, double epsilon, std::uint64_t seed)
{
    if (n < 1 || depth < 1) fail(ErrorKind::InvalidArgument, "residual stack needs n >= 1 and depth >= 1");
    Rng rng(seed);
    std::vector<DenseMatrix> g;
    g.reserve(static_cast<std::size_t>(depth - 1));
    for (int k = 1; k < depth; ++k) g.push_back(gaussian_matrix(rng, n, n, 1.0 / std::sqrt(static_cast<double>(n))));
    ResidualStack s = make_residual_stack(std::move(g), epsilon);
    s.depth = depth;
    s.seed = seed;
    return s;
}

ResidualStack make_residual_stack(std::vector<DenseMatrix> generators, double epsilon)
{
    if (!(epsilon >= 0) || !std::isfinite(epsilon)) fail(ErrorKind::InvalidArgument, "epsilon must be >= 0");
    ResidualStack s;
    s.epsilon = epsilon;
    s.depth = static_cast<int>(generators.size()) + 1;
    for (const auto& g : generators) {
        if (g.rows() != g.cols() || (!generators.empty() && g.rows() != generators.front().rows()))
            fail(ErrorKind::DimensionMismatch, "residual generators must share one square shape");
        s.g_max = std::max(s.g_max, operator_norm(g));
    }
    s.layers = std::move(generators);
    return s;
}

DenseMatrix residual_layer_jacobian(const ResidualStack& stack, int ell, const DenseMatrix& loss_grad,
                                    const DenseMatrix& branch_jac)
{
    const int L = stack.depth;
    if (ell < 1 || ell > L) fail(ErrorKind::IndexOutOfRange, "layer " + std::to_string(ell) + " outside 1.." + std::to_string(L));
    const Eigen::Index n = stack.dim() ? stack.dim() : branch_jac.rows();
    if (branch_jac.rows() != n || loss_grad.cols() != n)
        fail(ErrorKind::DimensionMismatch, "loss_grad / branch_jac do not match the hidden width");
    DenseMatrix x = branch_jac;
    for (int k = ell + 1; k <= L - 1; ++k) x += stack.epsilon * (stack.layers[static_cast<std::size_t>(k - 1)] * x);
    return loss_grad * x;
}

std::vector<DenseMatrix> residual_layer_jacobians(const ResidualStack& stack, const DenseMatrix& loss_grad,
                                                  std::span<const DenseMatrix> branch_jacs)
{
    const int L = stack.depth;
    if (static_cast<int>(branch_jacs.size()) != L)
        fail(ErrorKind::DimensionMismatch, "need one branch Jacobian per layer");
    std::vector<DenseMatrix> out(static_cast<std::size_t>(L));
    DenseMatrix r = loss_grad;
    for (int ell = L; ell >= 1; --ell) {
        if (ell + 1 <= L - 1) r += stack.epsilon * (r * stack.layers[static_cast<std::size_t>(ell)]);
        const auto& br = branch_jacs[static_cast<std::size_t>(ell - 1)];
        if (br.rows() != r.cols()) fail(ErrorKind::DimensionMismatch, "branch Jacobian row count mismatch");
        out[static_cast<std::size_t>(ell - 1)] = r * br;
    }
    return out;
}

DenseMatrix assemble_additive_M(std::span<const DenseMatrix> layer_jacobians)
{
    if (layer_jacobians.empty()) fail(ErrorKind::InvalidArgument, "no layer Jacobians");
    const Eigen::Index n = layer_jacobians.front().rows();
    DenseMatrix m = DenseMatrix::Zero(n, n);
    for (const auto& j : layer_jacobians) {
        if (j.rows() != n) fail(ErrorKind::DimensionMismatch, "layer Jacobians disagree on row count");
        m.selfadjointView<Eigen::Lower>().rankUpdate(j);
    }
    m.triangularView<Eigen::StrictlyUpper>() = m.transpose();
    return m;
}

int stability_horizon(double rho)
{
    return 4 * static_cast<int>(std::ceil(1.0 / (1.0 - rho)));
}

StableSSM make_stable_ssm(const SsmSpec& spec, std::uint64_t seed, bool verify)
{
    if (spec.state_dim < 1 || spec.input_dim < 1 || spec.output_dim < 1 || spec.horizon < 1 || spec.window < 1)
        fail(ErrorKind::InvalidArgument, "SSM dimensions and horizon must be positive");
    if (!(spec.rho > 0)) fail(ErrorKind::InvalidArgument, "rho must be positive");
    Rng rng(seed);
    StableSSM ssm;
    ssm.spec = spec;
    ssm.rho = spec.rho;
    const auto n = spec.state_dim;
    const DenseMatrix c = gaussian_matrix(rng, spec.output_dim, n, 1.0 / std::sqrt(static_cast<double>(n)));
    for (int t = 0; t < spec.horizon; ++t) {
        ssm.A.push_back(spec.scalar_transition ? DenseMatrix(spec.rho * DenseMatrix::Identity(n, n))
                                               : DenseMatrix(spec.rho * random_orthogonal(rng, n)));
        ssm.B.push_back(gaussian_matrix(rng, n, spec.input_dim, 1.0));
        ssm.C.push_back(c);
        ssm.inputs.push_back(gaussian_vector(rng, spec.input_dim, 1.0));
    }
    if (verify) verify_stability(ssm, std::min(stability_horizon(spec.rho < 1 ? spec.rho : 0.5), spec.horizon - 1));
    return ssm;
}

std::vector<double> propagator_norms(const StableSSM& ssm, int k_max)
{
    const int T = static_cast<int>(ssm.A.size());
    k_max = std::min(k_max, T - 1);
    std::vector<double> norms(static_cast<std::size_t>(std::max(0, k_max) + 1), 0.0);
    norms[0] = 1.0;
    for (int start = 0; start < T; ++start) {
        DenseMatrix phi = DenseMatrix::Identity(ssm.A[0].rows(), ssm.A[0].cols());
        for (int k = 1; k <= k_max && start + k < T; ++k) {
            phi = ssm.A[static_cast<std::size_t>(start + k)] * phi;
            norms[static_cast<std::size_t>(k)] = std::max(norms[static_cast<std::size_t>(k)], operator_norm(phi));
        }
    }
    return norms;
}

void verify_stability(const StableSSM& ssm, int k_max)
{
    if (!(ssm.rho > 0 && ssm.rho < 1))
        fail(ErrorKind::UnstableSSM, "stability bound rho = " + format_real(ssm.rho) + " is not inside (0, 1)");
    const auto norms = propagator_norms(ssm, k_max);
    for (std::size_t k = 0; k < norms.size(); ++k) {
        const double bound = ssm.prefactor * std::pow(ssm.rho, static_cast<double>(k));
        if (norms[k] > bound * (1.0 + 1e-9))
            fail(ErrorKind::UnstableSSM, std::to_string(k) + "-step propagator norm " + format_real(norms[k]) +
                                             " exceeds C_A rho^k = " + format_real(bound));
    }
}

int effective_range(const StableSSM& ssm, double delta, int k_max)
{
    const auto norms = propagator_norms(ssm, k_max);
    for (std::size_t k = 0; k < norms.size(); ++k)
        if (norms[k] <= delta) return static_cast<int>(k);
    return -1;
}

namespace {

DenseMatrix input_kron(const Vector& u, const DenseMatrix& m)
{
    DenseMatrix out(m.rows(), m.cols() * u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) out.middleCols(i * m.cols(), m.cols()) = u(i) * m;
    return out;
}

}  // namespace

SsmUnroll unroll_ssm_with_rate(const StableSSM& ssm, int horizon, std::span<const DenseMatrix> transition_rate,
                               bool check_stability)
{
    const int T = horizon;
    if (T < 1) fail(ErrorKind::InvalidArgument, "horizon must be >= 1");
    if (T > static_cast<int>(ssm.A.size())) fail(ErrorKind::IndexOutOfRange, "horizon exceeds the generated sequence");
    const bool with_rate = !transition_rate.empty();
    if (with_rate && static_cast<int>(transition_rate.size()) < T)
        fail(ErrorKind::DimensionMismatch, "need one transition rate per time step");
    if (check_stability) verify_stability(ssm, std::min(stability_horizon(ssm.rho < 1 ? ssm.rho : 0.5), T - 1));

    const auto n = static_cast<Eigen::Index>(ssm.spec.state_dim);
    const auto p = static_cast<Eigen::Index>(ssm.spec.output_dim);
    const auto nin = static_cast<Eigen::Index>(ssm.spec.input_dim);
    const int w = ssm.spec.window;
    const int nblocks = (T + w - 1) / w;
    const Eigen::Index nf = static_cast<Eigen::Index>(T) * p;
    const Eigen::Index per_step = n * nin;

    std::vector<DenseMatrix> blocks, rates;
    for (int b = 0; b < nblocks; ++b) {
        const int steps = std::min(w, T - b * w);
        blocks.emplace_back(DenseMatrix::Zero(nf, steps * per_step));
        if (with_rate) rates.emplace_back(DenseMatrix::Zero(nf, steps * per_step));
    }
    for (int tau = 0; tau < T; ++tau) {
        auto& blk = blocks[static_cast<std::size_t>(tau / w)];
        const Eigen::Index col = static_cast<Eigen::Index>(tau % w) * per_step;
        const Vector& u = ssm.inputs[static_cast<std::size_t>(tau)];
        DenseMatrix phi = DenseMatrix::Identity(n, n);
        DenseMatrix phi_dot = DenseMatrix::Zero(n, n);
        for (int t = tau; t < T; ++t) {
            if (t > tau) {
                const auto& a = ssm.A[static_cast<std::size_t>(t)];
                if (with_rate) phi_dot = a * phi_dot + transition_rate[static_cast<std::size_t>(t)] * phi;
                phi = a * phi;
            }
            const auto& c = ssm.C[static_cast<std::size_t>(t)];
            blk.block(t * p, col, p, per_step) = input_kron(u, c * phi);
            if (with_rate)
                rates[static_cast<std::size_t>(tau / w)].block(t * p, col, p, per_step) = input_kron(u, c * phi_dot);
        }
    }
    SsmUnroll out{BlockJacobian(std::move(blocks)), {}};
    if (with_rate) out.rate = BlockJacobian(std::move(rates));
    return out;
}

BlockJacobian unroll_ssm_jacobian(const StableSSM& ssm, int horizon, bool check_stability)
{
    return unroll_ssm_with_rate(ssm, horizon, {}, check_stability).jacobian;
}

BlockJacobian BandedEvolution::rate(const BlockJacobian& j) const
{
    const int L = j.count();
    if (static_cast<int>(coefficients.size()) != L) fail(ErrorKind::DimensionMismatch, "coefficient table size");
    std::vector<DenseMatrix> out;
    for (int l = 0; l < L; ++l) {
        DenseMatrix r = DenseMatrix::Zero(j.rows(), j.block(l).cols());
        for (int p = std::max(0, l - bandwidth); p <= std::min(L - 1, l + bandwidth); ++p) {
            const auto& a = coefficients[static_cast<std::size_t>(l)][static_cast<std::size_t>(p - l + bandwidth)];
            if (a.size()) r += j.block(p) * a;
        }
        out.push_back(std::move(r));
    }
    return BlockJacobian(std::move(out), j.time());
}

double BandedEvolution::coupling_norm() const
{
    double c = 0;
    for (const auto& row : coefficients) {
        double s = 0;
        for (const auto& a : row)
            if (a.size()) s += operator_norm(a);
        c = std::max(c, s);
    }
    return c;
}

BandedEvolution make_banded_evolution(std::span<const int> block_dims, int bandwidth, double scale,
                                      std::uint64_t seed)
{
    if (bandwidth < 0) fail(ErrorKind::InvalidArgument, "bandwidth must be >= 0");
    Rng rng(seed);
    const int L = static_cast<int>(block_dims.size());
    BandedEvolution evo;
    evo.bandwidth = bandwidth;
    evo.coefficients.resize(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) {
        evo.coefficients[static_cast<std::size_t>(l)].resize(static_cast<std::size_t>(2 * bandwidth + 1));
        for (int p = std::max(0, l - bandwidth); p <= std::min(L - 1, l + bandwidth); ++p)
            evo.coefficients[static_cast<std::size_t>(l)][static_cast<std::size_t>(p - l + bandwidth)] =
                gaussian_matrix(rng, block_dims[static_cast<std::size_t>(p)], block_dims[static_cast<std::size_t>(l)],
                                scale);
    }
    return evo;
}

namespace {

std::vector<DenseMatrix> axpy(const std::vector<DenseMatrix>& x, double a, const std::vector<DenseMatrix>& y)
{
    std::vector<DenseMatrix> out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += a * y[i];
    return out;
}

}  // namespace

BandedPath simulate_banded_evolution(const BlockJacobian& initial, const BandedEvolution& evo, double horizon,
                                     double step, int samples)
{
    if (samples < 2 || !(horizon > 0) || !(step > 0))
        fail(ErrorKind::InvalidArgument, "need >= 2 samples, positive horizon and step");
    BandedPath path;
    std::vector<DenseMatrix> y = initial.blocks();
    auto f = [&](const std::vector<DenseMatrix>& s) { return evo.rate(BlockJacobian(s)).blocks(); };
    double t = 0.0;
    const double dt_sample = horizon / (samples - 1);
    const int sub = std::max(1, static_cast<int>(std::ceil(dt_sample / step - 1e-9)));
    const double dt = dt_sample / sub;
    for (int i = 0; i < samples; ++i) {
        if (i > 0) {
            for (int k = 0; k < sub; ++k) {
                const auto k1 = f(y);
                const auto k2 = f(axpy(y, 0.5 * dt, k1));
                const auto k3 = f(axpy(y, 0.5 * dt, k2));
                const auto k4 = f(axpy(y, dt, k3));
                for (std::size_t b = 0; b < y.size(); ++b) y[b] += dt / 6.0 * (k1[b] + 2.0 * k2[b] + 2.0 * k3[b] + k4[b]);
            }
            t = dt_sample * i;
        }
        BlockJacobian j(y, t);
        path.rates.push_back(evo.rate(j));
        path.jacobians.push_back(std::move(j));
    }
    return path;
}

}  // namespace grsd
