#include <cmath>
#include <sstream>

#include "doctest.h"

#include "grsd/error.hpp"
#include "grsd/gradient_flow.hpp"
#include "grsd/rng.hpp"
#include "oracles.hpp"

using namespace grsd;

namespace {

ToyModel scalar_quadratic()
{
    return ToyModel(ModelKind::LinearRegression, DenseMatrix::Ones(1, 1), DenseMatrix::Zero(1, 1), 0, Vector::Ones(1));
}

double final_error(const ToyModel& model, double step, Integrator method, const Vector& exact)
{
    const auto s = integrate_states(model, {1.0}, step, method, 1e6);
    return (s.back() - exact).norm();
}

}  // namespace

TEST_CASE("scalar quadratic decays as exp(-t)")
{
    FlowOptions opt;
    opt.horizon = 1.0;
    opt.step = 1e-3;
    opt.sample_interval = 0.25;
    const auto traj = integrate_gradient_flow(scalar_quadratic(), opt);
    REQUIRE(traj.size() == 5);
    CHECK(traj.states.back()(0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(traj.losses.back() == doctest::Approx(0.5 * std::exp(-2.0)).epsilon(1e-11));
    CHECK(traj.times[2] == doctest::Approx(0.5));
}

TEST_CASE("linear regression flow matches the matrix exponential")
{
    const auto model = make_toy_model(ModelKind::LinearRegression, {10, 4, 1, 1}, 3);
    const DenseMatrix& x = model.inputs();
    const DenseMatrix& y = model.targets();
    // z = [theta; 1], dz/dt = [[-X^T X, X^T y], [0, 0]] z
    DenseMatrix gen = DenseMatrix::Zero(5, 5);
    gen.topLeftCorner(4, 4) = -x.transpose() * x;
    gen.topRightCorner(4, 1) = x.transpose() * y;
    const double t = 0.7;
    Vector z0(5);
    z0 << model.initial_parameters(), 1.0;
    const Vector exact = (oracle::expm(t * gen) * z0).head(4);
    const auto s = integrate_states(model, {t}, 1e-3, Integrator::Rk4, 1e6);
    CHECK((s.back() - exact).norm() < 1e-10);
}

TEST_CASE("time rescaling covariance")
{
    const auto model = make_toy_model(ModelKind::ShallowTanh, {8, 3, 1, 4}, 5);
    FlowOptions opt;
    opt.step = 1e-3;
    opt.sample_interval = 0.05;
    CHECK(check_time_rescaling_covariance(model, 1.0, 0.5, opt) == 0.0);
    // alpha-scaled loss at time t equals the unit loss at alpha t, up to integration error
    CHECK(check_time_rescaling_covariance(model, 2.0, 0.5, opt) < 1e-9);
    CHECK_THROWS_AS(check_time_rescaling_covariance(model, 0.0, 0.5, opt), Error);
}

TEST_CASE("covariance residual shrinks at fourth order")
{
    const auto model = make_toy_model(ModelKind::ShallowTanh, {8, 3, 1, 4}, 5);
    auto at = [&](double h) {
        FlowOptions opt;
        opt.step = h;
        opt.sample_interval = 0.3;
        return check_time_rescaling_covariance(model, 3.0, 0.6, opt);
    };
    const double r1 = at(0.1), r2 = at(0.05);  // both divide the sample interval
    REQUIRE(r2 > 0);
    CHECK(std::log2(r1 / r2) == doctest::Approx(4.0).epsilon(0.2));
}

TEST_CASE("gradients match central finite differences")
{
    for (auto kind : {ModelKind::LinearRegression, ModelKind::TwoLayerLinear, ModelKind::ShallowTanh}) {
        const auto model = make_toy_model(kind, {6, 3, 2, 4}, 9).rescaled(1.7);
        const Vector th = model.initial_parameters();
        const Vector g = model.gradient(th);
        for (Eigen::Index i = 0; i < th.size(); ++i) {
            Vector p = th, m = th;
            p(i) += 1e-6;
            m(i) -= 1e-6;
            CHECK(g(i) == doctest::Approx((model.loss(p) - model.loss(m)) / 2e-6).epsilon(1e-6));
        }
        // Jacobian columns against finite differences of the output
        const DenseMatrix j = model.jacobian(th).concatenated();
        for (Eigen::Index i = 0; i < th.size(); ++i) {
            Vector p = th, m = th;
            p(i) += 1e-6;
            m(i) -= 1e-6;
            const DenseMatrix d = (model.output(p) - model.output(m)) / 2e-6;
            const Eigen::Map<const Vector> dv(d.data(), d.size());
            CHECK((j.col(i) - dv).cwiseAbs().maxCoeff() < 1e-7);
        }
    }
}

TEST_CASE("loss is non-increasing along the flow")
{
    const auto model = make_toy_model(ModelKind::TwoLayerLinear, {12, 4, 2, 5}, 13);
    FlowOptions opt;
    opt.horizon = 2.0;
    opt.step = 1e-3;
    opt.sample_interval = 0.05;
    const auto traj = integrate_gradient_flow(model, opt);
    for (std::size_t i = 1; i < traj.size(); ++i) CHECK(traj.losses[i] <= traj.losses[i - 1] + 1e-14);
    CHECK(traj.losses.back() < traj.losses.front());
    CHECK(traj.jacobians[3].count() == 2);
}

TEST_CASE("RK4 converges at fourth order, Euler at first")
{
    const auto model = make_toy_model(ModelKind::ShallowTanh, {6, 2, 1, 3}, 2);
    const Vector ref = integrate_states(model, {1.0}, 1e-4, Integrator::Rk4, 1e6).back();
    const double r1 = final_error(model, 0.1, Integrator::Rk4, ref), r2 = final_error(model, 0.05, Integrator::Rk4, ref);
    CHECK(std::log2(r1 / r2) == doctest::Approx(4.0).epsilon(0.15));
    const double e1 = final_error(model, 0.02, Integrator::Euler, ref), e2 = final_error(model, 0.01, Integrator::Euler, ref);
    CHECK(std::log2(e1 / e2) == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("jacobian rate of a linear model is zero")
{
    const auto model = make_toy_model(ModelKind::LinearRegression, {5, 3, 1, 1}, 4);
    FlowOptions opt;
    opt.horizon = 0.3;
    opt.step = 1e-3;
    opt.sample_interval = 0.1;
    const auto traj = integrate_gradient_flow(model, opt);
    CHECK(jacobian_rate(traj, 1).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(jacobian_rate(traj, 0), Error);
    CHECK_THROWS_AS(jacobian_rate_blocks(traj, traj.size() - 1), Error);
}

TEST_CASE("jacobian rate of a sinusoidal path is second-order accurate")
{
    Rng rng(1);
    const DenseMatrix b = gaussian_matrix(rng, 4, 3, 1.0);
    auto error_at = [&](double dt) {
        Trajectory tr;
        for (int i = 0; i < 3; ++i) {
            const double t = 1.0 + (i - 1) * dt;
            tr.times.push_back(t);
            tr.jacobians.push_back(BlockJacobian({std::sin(t) * b}, t));
            tr.states.push_back(Vector::Zero(1));
            tr.losses.push_back(0.0);
        }
        const DenseMatrix rate = jacobian_rate(tr, 1);
        CHECK((jacobian_rate_blocks(tr, 1).concatenated() - rate).cwiseAbs().maxCoeff() == 0.0);
        return (rate - std::cos(1.0) * b).cwiseAbs().maxCoeff();
    };
    const double e1 = error_at(0.01), e2 = error_at(0.005);
    CHECK(e1 < 1e-4);
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("divergence is guarded")
{
    // loss 0.5 (1000 theta)^2 with a huge Euler step oscillates and blows up
    const ToyModel stiff(ModelKind::LinearRegression, DenseMatrix::Constant(1, 1, 1000.0), DenseMatrix::Zero(1, 1), 0,
                         Vector::Ones(1));
    FlowOptions opt;
    opt.horizon = 1.0;
    opt.step = 0.01;
    opt.sample_interval = 0.1;
    opt.method = Integrator::Euler;
    try {
        integrate_gradient_flow(stiff, opt);
        FAIL("divergence not detected");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DivergedTrajectory);
    }
    opt.throw_on_divergence = false;
    const auto traj = integrate_gradient_flow(stiff, opt);
    CHECK(traj.diverged);
    CHECK(traj.size() < 11);
}

TEST_CASE("model kind names round trip")
{
    for (auto k : {ModelKind::LinearRegression, ModelKind::TwoLayerLinear, ModelKind::ShallowTanh})
        CHECK(model_kind_from_string(to_string(k)) == k);
    CHECK_THROWS_AS(model_kind_from_string("mlp"), Error);
    CHECK_THROWS_AS(ToyModel(ModelKind::LinearRegression, DenseMatrix::Ones(2, 2), DenseMatrix::Ones(3, 1), 0,
                             Vector::Ones(2)),
                    Error);
}

TEST_CASE("trajectory CSV has one row per sample")
{
    FlowOptions opt;
    opt.horizon = 0.2;
    opt.step = 1e-3;
    opt.sample_interval = 0.1;
    const auto traj = integrate_gradient_flow(scalar_quadratic(), opt);
    std::ostringstream os;
    write_trajectory_csv(os, traj);
    const std::string s = os.str();
    CHECK(s.rfind("t,loss,J_op,Jdot_op\n", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == 4);
}
