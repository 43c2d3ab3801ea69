#include "grsd/spectral_core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "grsd/error.hpp"

namespace grsd {

void require_finite(const DenseMatrix& m, const std::string& what)
{
    if (!m.allFinite()) fail(ErrorKind::NonFinite, what + " has non-finite entries");
}

SymmetricEigenSystem symmetric_eigendecompose(const DenseMatrix& m, double tol)
{
    if (m.rows() != m.cols())
        fail(ErrorKind::NonSquare, "matrix is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    require_finite(m, "eigendecomposition input");
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    const double asym = m.rows() ? (m - m.transpose()).cwiseAbs().maxCoeff() : 0.0;
    if (asym > tol * scale)
        fail(ErrorKind::AsymmetryExceedsTol, "max |m - m^T| = " + format_real(asym));

    const DenseMatrix sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<DenseMatrix> solver(sym);
    if (solver.info() != Eigen::Success) fail(ErrorKind::NoConvergence, "symmetric eigensolver did not converge");
    return {solver.eigenvalues(), solver.eigenvectors()};
}

SymmetricEigenSystem clamp_psd(SymmetricEigenSystem eig)
{
    eig.eigenvalues = eig.eigenvalues.cwiseMax(0.0);
    return eig;
}

double operator_norm(const DenseMatrix& m, double tol)
{
    if (tol <= 0) fail(ErrorKind::InvalidTolerance, "operator_norm tolerance must be positive");
    require_finite(m, "operator_norm input");
    if (m.size() == 0) return 0.0;
    // Largest eigenvalue of the smaller Gram matrix; only the top of the
    // spectrum is needed, where squaring costs no relative accuracy.
    const DenseMatrix gram = m.rows() <= m.cols() ? DenseMatrix(m * m.transpose()) : DenseMatrix(m.transpose() * m);
    Eigen::SelfAdjointEigenSolver<DenseMatrix> solver(gram, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) fail(ErrorKind::NoConvergence, "operator_norm eigensolver did not converge");
    return std::sqrt(std::max(0.0, solver.eigenvalues().maxCoeff()));
}

LogBinGrid::LogBinGrid(double s_min, double h, int bins, int edge_margin)
    : s_min_(s_min), h_(h), bins_(bins), edge_margin_(edge_margin)
{
    if (!(h > 0) || !std::isfinite(h) || !std::isfinite(s_min))
        fail(ErrorKind::InvalidArgument, "bin width must be positive and finite");
    if (edge_margin < 0) fail(ErrorKind::InvalidArgument, "edge margin must be nonnegative");
    if (bins < 2 * edge_margin + 1)
        fail(ErrorKind::EmptyWindow, std::to_string(bins) + " bins leave no window inside the edge margins");
    window_lo_ = edge_margin;
    window_hi_ = bins - 1 - edge_margin;
}

LogBinGrid LogBinGrid::from_quantiles(std::span<const double> s, int window_bins, double q, int edge_margin)
{
    if (s.empty()) fail(ErrorKind::EmptyWindow, "no log-eigenvalues to place a grid on");
    if (!(q >= 0 && q < 0.5)) fail(ErrorKind::InvalidArgument, "quantile must lie in [0, 0.5)");
    if (window_bins < 1) fail(ErrorKind::InvalidArgument, "window needs at least one bin");
    std::vector<double> sorted(s.begin(), s.end());
    std::sort(sorted.begin(), sorted.end());
    auto quantile = [&](double p) {
        const double pos = p * static_cast<double>(sorted.size() - 1);
        const auto i = static_cast<std::size_t>(std::floor(pos));
        const std::size_t j = std::min(i + 1, sorted.size() - 1);
        return sorted[i] + (pos - static_cast<double>(i)) * (sorted[j] - sorted[i]);
    };
    const double lo = quantile(q);
    const double hi = quantile(1.0 - q);
    if (!(hi > lo)) fail(ErrorKind::EmptyWindow, "quantile range of the spectrum is degenerate");
    const double h = (hi - lo) / window_bins;
    return LogBinGrid(lo - edge_margin * h, h, window_bins + 2 * edge_margin, edge_margin);
}

LogBinGrid LogBinGrid::with_window(int lo, int hi) const
{
    if (lo < edge_margin_ || hi > bins_ - 1 - edge_margin_ || lo > hi)
        fail(ErrorKind::InvalidArgument, "window [" + std::to_string(lo) + ", " + std::to_string(hi) +
                                             "] violates the edge margin");
    LogBinGrid g = *this;
    g.window_lo_ = lo;
    g.window_hi_ = hi;
    return g;
}

LogBinGrid LogBinGrid::shifted(double ds) const
{
    LogBinGrid g = *this;
    g.s_min_ += ds;
    return g;
}

double LogBinGrid::center_lambda(int bin) const { return std::exp(center_s(bin)); }

double LogBinGrid::width_lambda(int bin) const
{
    return std::exp(upper_edge(bin)) - std::exp(lower_edge(bin));
}

std::optional<int> LogBinGrid::bin_of(double s) const
{
    if (!std::isfinite(s)) return std::nullopt;
    double t = (s - s_min_) / h_;
    const double nearest = std::round(t);
    if (std::abs(t - nearest) <= 1e-12 * std::max(1.0, std::abs(t))) t = nearest;
    const double k = std::floor(t);
    if (k < 0 || k >= bins_) return std::nullopt;
    return static_cast<int>(k);
}

bool LogBinGrid::same_layout(const LogBinGrid& o) const
{
    return bins_ == o.bins_ && window_lo_ == o.window_lo_ && window_hi_ == o.window_hi_ &&
           std::abs(h_ - o.h_) <= 1e-12 * h_ && std::abs(s_min_ - o.s_min_) <= 1e-12 * std::max(1.0, std::abs(s_min_));
}

std::vector<int> BinAssignment::members(int b) const
{
    std::vector<int> out;
    for (std::size_t u = 0; u < bin.size(); ++u)
        if (bin[u] == b) out.push_back(static_cast<int>(u));
    return out;
}

double default_eigen_floor(const SymmetricEigenSystem& eig)
{
    const double top = eig.max_eigenvalue();
    return top > 0 ? 1e-12 * top : 1e-300;
}

BinAssignment assign_log_bins(const SymmetricEigenSystem& eig, const LogBinGrid& grid, double floor)
{
    if (!(floor > 0)) fail(ErrorKind::InvalidArgument, "eigenvalue floor must be positive");
    BinAssignment out;
    const auto n = static_cast<std::size_t>(eig.dim());
    out.bin.assign(n, -1);
    out.status.assign(n, BinStatus::Binned);
    out.population.assign(static_cast<std::size_t>(grid.bins()), 0);
    int in_window = 0;
    for (std::size_t u = 0; u < n; ++u) {
        const double lam = eig.eigenvalues(static_cast<Eigen::Index>(u));
        if (!(lam >= floor)) {
            out.status[u] = BinStatus::BelowFloor;
            ++out.below_floor;
            continue;
        }
        const auto b = grid.bin_of(std::log(lam));
        if (!b) {
            out.status[u] = BinStatus::OutsideGrid;
            ++out.outside_grid;
            continue;
        }
        out.bin[u] = *b;
        ++out.population[static_cast<std::size_t>(*b)];
        if (grid.in_window(*b)) ++in_window;
    }
    if (in_window == 0) fail(ErrorKind::EmptyWindow, "no eigenvalue inside the intermediate window");
    return out;
}

std::vector<double> log_eigenvalues(const SymmetricEigenSystem& eig, double floor)
{
    std::vector<double> s;
    for (Eigen::Index u = 0; u < eig.dim(); ++u)
        if (eig.eigenvalues(u) >= floor) s.push_back(std::log(eig.eigenvalues(u)));
    return s;
}

std::string format_real(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void write_matrix_csv(std::ostream& out, const DenseMatrix& m)
{
    out << m.rows() << ',' << m.cols() << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << format_real(m(i, j));
        }
        out << '\n';
    }
}

DenseMatrix read_matrix_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::IoError, "matrix CSV is empty");
    long rows = -1, cols = -1;
    char comma = 0;
    std::istringstream head(line);
    if (!(head >> rows >> comma >> cols) || comma != ',' || rows < 0 || cols < 0)
        fail(ErrorKind::IoError, "matrix CSV header must be 'rows,cols'");
    DenseMatrix m(rows, cols);
    for (long i = 0; i < rows; ++i) {
        if (!std::getline(in, line)) fail(ErrorKind::IoError, "matrix CSV ends early at row " + std::to_string(i));
        std::istringstream row(line);
        std::string cell;
        long j = 0;
        while (std::getline(row, cell, ',')) {
            if (j >= cols) fail(ErrorKind::IoError, "too many values on row " + std::to_string(i));
            try {
                m(i, j++) = std::stod(cell);
            } catch (const std::exception&) {
                fail(ErrorKind::IoError, "unparsable value '" + cell + "' on row " + std::to_string(i));
            }
        }
        if (j != cols) fail(ErrorKind::IoError, "row " + std::to_string(i) + " has " + std::to_string(j) + " values");
    }
    require_finite(m, "matrix CSV");
    return m;
}

}  // namespace grsd
