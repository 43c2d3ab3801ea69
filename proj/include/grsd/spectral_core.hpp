#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace grsd {

using DenseMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

void require_finite(const DenseMatrix& m, const std::string& what);

struct SymmetricEigenSystem {
    Vector eigenvalues;       // ascending
    DenseMatrix eigenvectors; // column u is phi_u

    Eigen::Index dim() const { return eigenvalues.size(); }
    double max_eigenvalue() const { return eigenvalues.size() ? eigenvalues(eigenvalues.size() - 1) : 0.0; }
};

SymmetricEigenSystem symmetric_eigendecompose(const DenseMatrix& m, double tol = 1e-10);

// Negative eigenvalues of a PSD input that only reflect roundoff are set to 0.
SymmetricEigenSystem clamp_psd(SymmetricEigenSystem eig);

double operator_norm(const DenseMatrix& m, double tol = 1e-12);

class LogBinGrid {
public:
    static constexpr int default_edge_margin = 2;

    LogBinGrid(double s_min, double h, int bins, int edge_margin = default_edge_margin);

    // Grid whose window spans the [q, 1-q] quantile range of the given
    // log-eigenvalues with `window_bins` bins, padded by edge_margin bins.
    static LogBinGrid from_quantiles(std::span<const double> s, int window_bins, double q,
                                     int edge_margin = default_edge_margin);

    LogBinGrid with_window(int lo, int hi) const;
    LogBinGrid shifted(double ds) const;

    double h() const { return h_; }
    double s_min() const { return s_min_; }
    double s_max() const { return s_min_ + h_ * bins_; }
    int bins() const { return bins_; }
    int edge_margin() const { return edge_margin_; }
    int window_lo() const { return window_lo_; }
    int window_hi() const { return window_hi_; }
    int window_size() const { return window_hi_ - window_lo_ + 1; }
    bool in_window(int bin) const { return bin >= window_lo_ && bin <= window_hi_; }

    double lower_edge(int bin) const { return s_min_ + h_ * bin; }
    double upper_edge(int bin) const { return s_min_ + h_ * (bin + 1); }
    double center_s(int bin) const { return s_min_ + h_ * (bin + 0.5); }
    double center_lambda(int bin) const;  // geometric centre
    double width_lambda(int bin) const;

    // Half-open [s_a, s_a + h); values within 1e-12 relative of an edge snap
    // to the upper bin.
    std::optional<int> bin_of(double s) const;

    bool same_layout(const LogBinGrid& other) const;

private:
    double s_min_;
    double h_;
    int bins_;
    int edge_margin_;
    int window_lo_;
    int window_hi_;
};

enum class BinStatus { Binned, BelowFloor, OutsideGrid };

struct BinAssignment {
    std::vector<int> bin;          // per eigenvalue, -1 when excluded
    std::vector<BinStatus> status; // per eigenvalue
    std::vector<int> population;   // per bin
    int below_floor = 0;
    int outside_grid = 0;

    std::vector<int> members(int b) const;
};

double default_eigen_floor(const SymmetricEigenSystem& eig);

BinAssignment assign_log_bins(const SymmetricEigenSystem& eig, const LogBinGrid& grid, double floor);

std::vector<double> log_eigenvalues(const SymmetricEigenSystem& eig, double floor);

void write_matrix_csv(std::ostream& out, const DenseMatrix& m);
DenseMatrix read_matrix_csv(std::istream& in);

// 17 significant digits; shared by every text output.
std::string format_real(double x);

}  // namespace grsd
