#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "grsd/condition_diagnostics.hpp"

namespace grsd {

struct JacobianPath {
    std::vector<BlockJacobian> jacobians;
    std::vector<BlockJacobian> rates;  // conformal with jacobians; an empty BlockJacobian where unknown
    bool diverged = false;
};

JacobianPath path_from_trajectory(const Trajectory& trajectory);

// RelativeRate is M^{-1/2} dM/dt M^{-1/2} on the retained spectrum: the rate
// measured in units of the local eigenvalue scale.
enum class CouplingOperatorKind { RelativeRate, RateOfM, M, Custom };

std::string to_string(CouplingOperatorKind kind);

struct ConditionThresholds {
    int bandwidth = 8;
    double bandedness = 1e-2;
    double incoherence_tail = 1.0;
    double gronwall_tol = 1e-8;
    double path_bound = 1e3;
    double log_shift = 0.5;
    int min_population = 2;
    double weight_base = 0.5;
    int window_bins = 6;
    double quantile = 0.1;
};

struct SuiteInput {
    JacobianPath path;
    std::string family;
    nlohmann::json provenance = nlohmann::json::object();
    CouplingOperatorKind coupling = CouplingOperatorKind::RelativeRate;
    std::optional<DenseMatrix> custom_coupling;
};

struct ConditionBlock {
    std::string name;
    double score = 0.0;
    double threshold = 0.0;
    bool pass = false;
    std::vector<std::string> warnings;
    nlohmann::json details = nlohmann::json::object();
};

struct ConditionReport {
    static constexpr int version = 1;
    std::array<ConditionBlock, 4> conditions;
    ConditionThresholds thresholds;
    nlohmann::json provenance;
    bool all_pass() const;

    // grids kept for CSV export
    BandednessReport bandedness;
    IncoherenceReport incoherence;
    PathNorms path_norms;
    std::optional<LogShiftReport> log_shift;
};

ConditionReport condition_suite(const SuiteInput& input, const ConditionThresholds& thresholds = {});

nlohmann::json to_json(const ConditionReport& report);
nlohmann::json to_json(const ConditionThresholds& thresholds);

void write_bandedness_csv(std::ostream& out, const BandednessReport& report);
void write_envelope_csv(std::ostream& out, const IncoherenceReport& report);
void write_couplings_csv(std::ostream& out, const LogShiftReport* report);
void write_path_norms_csv(std::ostream& out, const PathNorms& norms);

}  // namespace grsd
