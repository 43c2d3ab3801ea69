#include "grsd/gradient_flow.hpp"

#include <cmath>
#include <ostream>

#include "grsd/error.hpp"
#include "grsd/rng.hpp"

namespace grsd {

std::string to_string(ModelKind kind)
{
    switch (kind) {
    case ModelKind::LinearRegression: return "linear-regression";
    case ModelKind::TwoLayerLinear: return "two-layer-linear";
    case ModelKind::ShallowTanh: return "shallow-tanh";
    }
    return "unknown";
}

ModelKind model_kind_from_string(const std::string& name)
{
    if (name == "linear-regression") return ModelKind::LinearRegression;
    if (name == "two-layer-linear") return ModelKind::TwoLayerLinear;
    if (name == "shallow-tanh") return ModelKind::ShallowTanh;
    fail(ErrorKind::InvalidArgument, "unknown model kind '" + name + "'");
}

namespace {

Eigen::Index expected_parameters(ModelKind kind, Eigen::Index d, Eigen::Index m, int hidden)
{
    if (kind == ModelKind::LinearRegression) return d * m;
    return d * hidden + static_cast<Eigen::Index>(hidden) * m;
}

}  // namespace

ToyModel::ToyModel(ModelKind kind, DenseMatrix x, DenseMatrix y, int hidden, Vector theta0)
    : kind_(kind), x_(std::move(x)), y_(std::move(y)), hidden_(hidden), theta0_(std::move(theta0))
{
    if (x_.rows() != y_.rows()) fail(ErrorKind::DimensionMismatch, "inputs and targets disagree on sample count");
    if (kind_ != ModelKind::LinearRegression && hidden_ < 1) fail(ErrorKind::InvalidArgument, "hidden width must be >= 1");
    if (theta0_.size() != expected_parameters(kind_, x_.cols(), y_.cols(), hidden_))
        fail(ErrorKind::DimensionMismatch, "initial parameter vector has the wrong length for " + to_string(kind_));
    require_finite(x_, "inputs");
    require_finite(y_, "targets");
}

ToyModel ToyModel::rescaled(double alpha) const
{
    if (!(alpha > 0)) fail(ErrorKind::InvalidArgument, "loss rescaling factor must be positive");
    ToyModel m = *this;
    m.loss_scale_ *= alpha;
    return m;
}

DenseMatrix ToyModel::output(const Vector& theta) const
{
    const Eigen::Index d = x_.cols(), m = y_.cols(), h = hidden_;
    switch (kind_) {
    case ModelKind::LinearRegression:
        return x_ * Eigen::Map<const DenseMatrix>(theta.data(), d, m);
    case ModelKind::TwoLayerLinear: {
        Eigen::Map<const DenseMatrix> w1(theta.data(), d, h), w2(theta.data() + d * h, h, m);
        return x_ * w1 * w2;
    }
    case ModelKind::ShallowTanh: {
        Eigen::Map<const DenseMatrix> w1(theta.data(), d, h), w2(theta.data() + d * h, h, m);
        return (x_ * w1).array().tanh().matrix() * w2;
    }
    }
    return {};
}

double ToyModel::loss(const Vector& theta) const
{
    return loss_scale_ * 0.5 * (output(theta) - y_).squaredNorm();
}

BlockJacobian ToyModel::jacobian(const Vector& theta, double time) const
{
    const Eigen::Index n = x_.rows(), d = x_.cols(), m = y_.cols(), h = hidden_;
    const Eigen::Index rows = n * m;
    if (kind_ == ModelKind::LinearRegression) {
        DenseMatrix j = DenseMatrix::Zero(rows, d * m);
        for (Eigen::Index b = 0; b < m; ++b) j.block(b * n, b * d, n, d) = x_;
        return BlockJacobian({j}, time);
    }
    Eigen::Map<const DenseMatrix> w1(theta.data(), d, h), w2(theta.data() + d * h, h, m);
    DenseMatrix pre = x_ * w1;
    DenseMatrix act = pre, slope = DenseMatrix::Ones(n, h);
    if (kind_ == ModelKind::ShallowTanh) {
        act = pre.array().tanh().matrix();
        slope = (1.0 - act.array().square()).matrix();
    }
    DenseMatrix j1(rows, d * h), j2 = DenseMatrix::Zero(rows, h * m);
    for (Eigen::Index b = 0; b < h; ++b)
        for (Eigen::Index a = 0; a < d; ++a)
            for (Eigen::Index jo = 0; jo < m; ++jo)
                j1.block(jo * n, a + d * b, n, 1) = (slope.col(b).array() * x_.col(a).array() * w2(b, jo)).matrix();
    for (Eigen::Index c = 0; c < m; ++c)
        for (Eigen::Index b = 0; b < h; ++b) j2.block(c * n, b + h * c, n, 1) = act.col(b);
    return BlockJacobian({j1, j2}, time);
}

Vector ToyModel::gradient(const Vector& theta) const
{
    const DenseMatrix r = output(theta) - y_;
    const Eigen::Map<const Vector> rv(r.data(), r.size());
    const BlockJacobian j = jacobian(theta);
    Vector g(theta.size());
    Eigen::Index off = 0;
    for (const auto& b : j.blocks()) {
        g.segment(off, b.cols()) = loss_scale_ * (b.transpose() * rv);
        off += b.cols();
    }
    return g;
}

ToyModel make_toy_model(ModelKind kind, const ToySpec& spec, std::uint64_t seed)
{
    if (spec.samples < 1 || spec.inputs < 1 || spec.outputs < 1 || spec.hidden < 1)
        fail(ErrorKind::InvalidArgument, "toy model dimensions must be positive");
    Rng rng(seed);
    const double xs = 1.0 / std::sqrt(static_cast<double>(spec.inputs));
    DenseMatrix x = gaussian_matrix(rng, spec.samples, spec.inputs, 1.0);
    const DenseMatrix teacher = gaussian_matrix(rng, spec.inputs, spec.outputs, xs);
    DenseMatrix y = x * teacher;
    if (kind == ModelKind::ShallowTanh) y = y.array().tanh().matrix();
    y += gaussian_matrix(rng, spec.samples, spec.outputs, 0.1);
    const Eigen::Index p = expected_parameters(kind, spec.inputs, spec.outputs, spec.hidden);
    Vector theta0(p);
    if (kind == ModelKind::LinearRegression) {
        theta0 = gaussian_vector(rng, p, xs);
    } else {
        const Eigen::Index first = static_cast<Eigen::Index>(spec.inputs) * spec.hidden;
        theta0.head(first) = gaussian_vector(rng, first, xs);
        theta0.tail(p - first) = gaussian_vector(rng, p - first, 1.0 / std::sqrt(static_cast<double>(spec.hidden)));
    }
    return ToyModel(kind, std::move(x), std::move(y), spec.hidden, std::move(theta0));
}

namespace {

Vector checked_gradient(const ToyModel& model, const Vector& theta)
{
    Vector g = model.gradient(theta);
    if (!g.allFinite()) fail(ErrorKind::NonFiniteGradient, "gradient has non-finite entries");
    return g;
}

Vector flow_step(const ToyModel& model, const Vector& theta, double dt, Integrator method)
{
    if (method == Integrator::Euler) return theta - dt * checked_gradient(model, theta);
    const Vector k1 = -checked_gradient(model, theta);
    const Vector k2 = -checked_gradient(model, theta + 0.5 * dt * k1);
    const Vector k3 = -checked_gradient(model, theta + 0.5 * dt * k2);
    const Vector k4 = -checked_gradient(model, theta + dt * k3);
    return theta + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

std::vector<Vector> integrate_states(const ToyModel& model, const std::vector<double>& sample_times, double step,
                                     Integrator method, double guard, bool* diverged)
{
    if (!(step > 0)) fail(ErrorKind::InvalidArgument, "step must be positive");
    if (sample_times.empty() || sample_times.front() < 0) fail(ErrorKind::InvalidArgument, "sample times must start at >= 0");
    if (diverged) *diverged = false;
    std::vector<Vector> states;
    Vector theta = model.initial_parameters();
    double t = 0.0;
    for (double target : sample_times) {
        if (target < t) fail(ErrorKind::InvalidArgument, "sample times must be increasing");
        const double span = target - t;
        if (span > 0) {
            const int n = static_cast<int>(std::ceil(span / step - 1e-9));
            const double dt = span / n;
            for (int k = 0; k < n; ++k) {
                theta = flow_step(model, theta, dt, method);
                const double loss = model.loss(theta);
                if (!theta.allFinite() || theta.norm() > guard || !std::isfinite(loss)) {
                    if (diverged) {
                        *diverged = true;
                        return states;
                    }
                    fail(ErrorKind::DivergedTrajectory, "||theta|| left the guard at t = " + format_real(t + (k + 1) * dt));
                }
            }
        }
        t = target;
        states.push_back(theta);
    }
    return states;
}

Trajectory integrate_gradient_flow(const ToyModel& model, const FlowOptions& options)
{
    if (!(options.step > 0) || !(options.horizon >= options.step))
        fail(ErrorKind::InvalidArgument, "need step > 0 and horizon >= step");
    if (!(options.sample_interval > 0)) fail(ErrorKind::InvalidArgument, "sample interval must be positive");
    std::vector<double> times;
    const auto n = static_cast<int>(std::floor(options.horizon / options.sample_interval + 1e-9));
    for (int i = 0; i <= n; ++i) times.push_back(i * options.sample_interval);
    if (options.horizon - times.back() > 1e-12 * options.horizon) times.push_back(options.horizon);

    Trajectory traj;
    bool diverged = false;
    auto states = integrate_states(model, times, options.step, options.method, options.guard,
                                   options.throw_on_divergence ? nullptr : &diverged);
    traj.diverged = diverged;
    for (std::size_t i = 0; i < states.size(); ++i) {
        traj.times.push_back(times[i]);
        traj.losses.push_back(model.loss(states[i]));
        traj.jacobians.push_back(model.jacobian(states[i], times[i]));
        traj.states.push_back(std::move(states[i]));
    }
    return traj;
}

double check_time_rescaling_covariance(const ToyModel& model, double alpha, double horizon, const FlowOptions& options)
{
    if (!(alpha > 0)) fail(ErrorKind::InvalidArgument, "alpha must be positive");
    if (!(horizon > 0)) fail(ErrorKind::InvalidArgument, "horizon must be positive");
    std::vector<double> fast, slow;
    const auto n = static_cast<int>(std::ceil(horizon / options.sample_interval - 1e-9));
    for (int i = 0; i <= n; ++i) {
        const double t = std::min(horizon, i * options.sample_interval);
        fast.push_back(t);
        slow.push_back(alpha * t);
    }
    const auto a = integrate_states(model.rescaled(alpha), fast, options.step, options.method, options.guard);
    const auto b = integrate_states(model, slow, options.step, options.method, options.guard);
    double dev = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dev = std::max(dev, (a[i] - b[i]).norm());
    return dev;
}

DenseMatrix jacobian_rate(const Trajectory& trajectory, std::size_t i)
{
    if (i == 0 || i + 1 >= trajectory.size())
        fail(ErrorKind::BoundarySample, "central difference needs samples on both sides of index " + std::to_string(i));
    const double dt = trajectory.times[i + 1] - trajectory.times[i - 1];
    return (trajectory.jacobians[i + 1].concatenated() - trajectory.jacobians[i - 1].concatenated()) / dt;
}

BlockJacobian jacobian_rate_blocks(const Trajectory& trajectory, std::size_t i)
{
    if (i == 0 || i + 1 >= trajectory.size())
        fail(ErrorKind::BoundarySample, "central difference needs samples on both sides of index " + std::to_string(i));
    const double dt = trajectory.times[i + 1] - trajectory.times[i - 1];
    std::vector<DenseMatrix> blocks;
    for (int l = 0; l < trajectory.jacobians[i].count(); ++l)
        blocks.push_back((trajectory.jacobians[i + 1].block(l) - trajectory.jacobians[i - 1].block(l)) / dt);
    return BlockJacobian(std::move(blocks), trajectory.times[i]);
}

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory)
{
    out << "t,loss,J_op,Jdot_op\n";
    for (std::size_t i = 0; i < trajectory.size(); ++i) {
        out << format_real(trajectory.times[i]) << ',' << format_real(trajectory.losses[i]) << ','
            << format_real(operator_norm(trajectory.jacobians[i].concatenated())) << ',';
        if (i > 0 && i + 1 < trajectory.size()) out << format_real(operator_norm(jacobian_rate(trajectory, i)));
        out << '\n';
    }
}

}  // namespace grsd
