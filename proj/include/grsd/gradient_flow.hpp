#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "grsd/learning_config.hpp"

namespace grsd {

enum class ModelKind { LinearRegression, TwoLayerLinear, ShallowTanh };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

// Loss is 0.5 * ||f(theta) - Y||_F^2 with an optional positive multiplier.
class ToyModel {
public:
    ToyModel(ModelKind kind, DenseMatrix x, DenseMatrix y, int hidden, Vector theta0);

    ModelKind kind() const { return kind_; }
    const DenseMatrix& inputs() const { return x_; }
    const DenseMatrix& targets() const { return y_; }
    int hidden() const { return hidden_; }
    const Vector& initial_parameters() const { return theta0_; }
    Eigen::Index parameter_count() const { return theta0_.size(); }
    double loss_scale() const { return loss_scale_; }

    ToyModel rescaled(double alpha) const;  // same model under alpha * loss

    DenseMatrix output(const Vector& theta) const;
    double loss(const Vector& theta) const;
    Vector gradient(const Vector& theta) const;
    // d vec(f) / d theta, column-major vec over the output matrix, one block
    // per parameter group.
    BlockJacobian jacobian(const Vector& theta, double time = 0.0) const;

private:
    ModelKind kind_;
    DenseMatrix x_, y_;
    int hidden_;
    Vector theta0_;
    double loss_scale_ = 1.0;
};

struct ToySpec {
    int samples = 8;
    int inputs = 3;
    int outputs = 1;
    int hidden = 4;
};

ToyModel make_toy_model(ModelKind kind, const ToySpec& spec, std::uint64_t seed);

enum class Integrator { Rk4, Euler };

struct FlowOptions {
    double horizon = 10.0;
    double step = 1e-3;
    double sample_interval = 0.1;
    Integrator method = Integrator::Rk4;
    double guard = 1e6;
    bool throw_on_divergence = true;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<Vector> states;
    std::vector<double> losses;
    std::vector<BlockJacobian> jacobians;
    bool diverged = false;

    std::size_t size() const { return times.size(); }
};

// Integrates from 0 through the given strictly increasing sample times with
// uniform substeps no longer than `step` between consecutive samples.
std::vector<Vector> integrate_states(const ToyModel& model, const std::vector<double>& sample_times, double step,
                                     Integrator method, double guard, bool* diverged = nullptr);

Trajectory integrate_gradient_flow(const ToyModel& model, const FlowOptions& options);

double check_time_rescaling_covariance(const ToyModel& model, double alpha, double horizon,
                                       const FlowOptions& options = {});

DenseMatrix jacobian_rate(const Trajectory& trajectory, std::size_t i);
BlockJacobian jacobian_rate_blocks(const Trajectory& trajectory, std::size_t i);

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory);

}  // namespace grsd
