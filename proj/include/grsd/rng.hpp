#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

namespace grsd {

// Seed splitting: every component derives its own stream from the master seed
// through SplitMix64 applied to (master, stream tag, index).
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0);
std::uint64_t stream_tag(std::string_view name);

// mt19937_64 output is fixed by the standard; the distributions below are
// coded here so that sampled values do not depend on the standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }
    double uniform();  // open interval (0, 1)
    double normal();
    void fill_normal(double* out, std::size_t count, double stddev);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

Eigen::MatrixXd gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev);
Eigen::VectorXd gaussian_vector(Rng& rng, Eigen::Index size, double stddev);
Eigen::MatrixXd random_orthogonal(Rng& rng, Eigen::Index n);

}  // namespace grsd
