#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "grsd/condition_suite.hpp"
#include "grsd/experiments.hpp"
#include "grsd/rng.hpp"
#include "grsd/runner.hpp"

namespace grsd::runner {

namespace {

using nlohmann::json;
using Check = std::function<std::optional<std::string>(const json&)>;

Check positive()
{
    return [](const json& v) -> std::optional<std::string> {
        if (v.get<double>() > 0) return std::nullopt;
        return "must be positive";
    };
}

Check non_negative()
{
    return [](const json& v) -> std::optional<std::string> {
        if (v.get<double>() >= 0) return std::nullopt;
        return "must be >= 0";
    };
}

Check in_range(double lo, double hi)
{
    return [lo, hi](const json& v) -> std::optional<std::string> {
        const double x = v.get<double>();
        if (x >= lo && x <= hi) return std::nullopt;
        return "must lie in [" + format_real(lo) + ", " + format_real(hi) + "], got " + format_real(x);
    };
}

Check open_unit()
{
    return [](const json& v) -> std::optional<std::string> {
        const double x = v.get<double>();
        if (x > 0 && x < 1) return std::nullopt;
        return "must lie strictly inside (0, 1), got " + format_real(x);
    };
}

// eta feeds the depth threshold, whose formula needs 0 < eta < 1
Check eta_check()
{
    return [](const json& v) -> std::optional<std::string> {
        const double x = v.get<double>();
        if (x > 0 && x < 1) return std::nullopt;
        return "eta = " + format_real(x) +
               " violates the DepthThreshold invariant: tolerance eta must lie in (0, 1) for "
               "L_min = ceil(max(C1/(eps^2 eta^2), (C2/eps^2) log(1/eta)))";
    };
}

Check one_of(std::vector<std::string> names)
{
    return [names](const json& v) -> std::optional<std::string> {
        const auto s = v.get<std::string>();
        for (const auto& n : names)
            if (n == s) return std::nullopt;
        std::string all;
        for (const auto& n : names) all += (all.empty() ? "" : ", ") + n;
        return "'" + s + "' is not one of: " + all;
    };
}

Check each(Check inner)
{
    return [inner](const json& v) -> std::optional<std::string> {
        for (const auto& e : v)
            if (auto m = inner(e)) return "entry " + e.dump() + ": " + *m;
        return std::nullopt;
    };
}

std::vector<std::string> split_models(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

Check model_list()
{
    return [](const json& v) -> std::optional<std::string> {
        const auto names = split_models(v.get<std::string>());
        if (names.empty()) return "name at least one model";
        for (const auto& n : names) try {
                (void)model_kind_from_string(n);
            } catch (const Error&) {
                return "unknown model '" + n + "' (linear-regression, two-layer-linear, shallow-tanh)";
            }
        return std::nullopt;
    };
}

ParamSpec P(std::string name, ParamType type, json def, std::string help, Check check = {})
{
    return {std::move(name), type, std::move(def), std::move(help), std::move(check)};
}

std::vector<RecipeInfo> build_catalog()
{
    using T = ParamType;
    std::vector<RecipeInfo> c;
    c.push_back({"power-law-recovery",
                 "manufactured transport v = c lambda^a through shell energies, flux inversion and the power-law fit",
                 {P("exponent", T::Real, 0.7, "transport exponent a", in_range(-3, 3)),
                  P("coefficient", T::Real, 0.5, "transport coefficient c",
                    [](const json& v) -> std::optional<std::string> {
                        if (v.get<double>() != 0) return std::nullopt;
                        return "must be nonzero";
                    }),
                  P("s_lo", T::Real, -7.0, "lowest log-eigenvalue"),
                  P("s_hi", T::Real, 7.0, "highest log-eigenvalue"),
                  P("h", T::Real, 0.1, "log-bin width", in_range(1e-3, 2)),
                  P("modes_per_bin", T::Integer, 10, "modes per log bin", in_range(1, 1000)),
                  P("bump_width", T::Real, 1.2, "initial energy profile width in s", positive()),
                  P("window_half_width", T::Real, 3.0, "fit window half width in s", positive()),
                  P("time_samples", T::Integer, 5, "time samples", in_range(3, 101)),
                  P("dissipation", T::Text, "zero", "zero or linear", one_of({"zero", "linear"})),
                  P("gamma", T::Real, 0.0, "linear dissipation rate", non_negative())}});
    c.push_back({"condition-suite",
                 "the four sufficient-condition diagnostics on one Jacobian path",
                 {P("family", T::Text, "residual", "residual, ssm, banded or toy", one_of({"residual", "ssm", "banded", "toy"})),
                  P("n", T::Integer, 64, "residual width", in_range(2, 2048)),
                  P("depth", T::Integer, 256, "residual depth L", in_range(2, 100000)),
                  P("epsilon", T::Real, 0.1, "residual scale", positive()),
                  P("branch_width", T::Integer, 8, "residual branch parameters per layer", in_range(1, 2048)),
                  P("rho", T::Real, 0.9, "SSM contraction", positive()),
                  P("ssm_steps", T::Integer, 48, "SSM horizon", in_range(2, 100000)),
                  P("state_dim", T::Integer, 4, "SSM state dimension", in_range(1, 512)),
                  P("output_dim", T::Integer, 4, "SSM output dimension", in_range(1, 512)),
                  P("model", T::Text, "two-layer-linear", "toy model", model_list()),
                  P("train_horizon", T::Real, 2.0, "toy training horizon", positive()),
                  P("samples", T::Integer, 3, "path samples", in_range(1, 10000)),
                  P("dt", T::Real, 0.05, "path sample spacing", positive()),
                  P("coupling", T::Text, "relative-rate", "coupling operator", one_of({"relative-rate", "rate-of-M", "M"})),
                  P("bandwidth", T::Integer, 8, "Condition 1 bandwidth K", in_range(0, 100000)),
                  P("bandedness_tol", T::Real, 1e-2, "Condition 1 threshold", positive()),
                  P("incoherence_tail", T::Real, 1.0, "Condition 2 threshold", positive()),
                  P("gronwall_tol", T::Real, 1e-8, "Gronwall margin tolerance", non_negative()),
                  P("path_bound", T::Real, 1e3, "Condition 3 threshold", positive()),
                  P("log_shift_tol", T::Real, 0.5, "Condition 4 threshold", positive()),
                  P("min_population", T::Integer, 2, "minimum modes per bin", in_range(1, 100000)),
                  P("weight_base", T::Real, 0.5, "envelope weight base", open_unit()),
                  P("window_bins", T::Integer, 6, "log bins in the window", in_range(2, 1000)),
                  P("quantile", T::Real, 0.1, "window quantile", in_range(0, 0.49))}});
    c.push_back({"residual-depth-sweep",
                 "Berry-Esseen distance and depth-averaged log-shift errors over residual depths",
                 {P("n", T::Integer, 64, "width of the stacks used for the bin statistics", in_range(2, 2048)),
                  P("chain_dim", T::Integer, 8, "width of the direction chain", in_range(2, 2048)),
                  P("epsilon", T::Real, 0.1, "residual scale", positive()),
                  P("depths", T::IntegerList, json::array({64, 256, 1024}), "depth grid", each(in_range(2, 1000000))),
                  P("l_star", T::Integer, 8, "boundary layers", in_range(0, 1000000)),
                  P("members", T::Integer, 4096, "chain ensemble size", in_range(1000, 10000000)),
                  P("window_bins", T::Integer, 8, "log bins in the window", in_range(2, 1000)),
                  P("quantile", T::Real, 0.1, "window quantile", in_range(0, 0.49)),
                  P("eta", T::Real, 0.1, "depth-threshold tolerance", eta_check()),
                  P("c1", T::Real, 1.0, "variance constant", positive()),
                  P("c2", T::Real, 1.0, "mixing constant", positive()),
                  P("replicates", T::Integer, 4, "seeds averaged into err_bulk", in_range(1, 1000))}});
    c.push_back({"mixing-sweep",
                 "second-moment mixing time of the direction chain over residual scales",
                 {P("n", T::Integer, 8, "chain width", in_range(2, 2048)),
                  P("epsilons", T::RealList, json::array({0.05, 0.1, 0.2}), "residual scales", each(positive())),
                  P("eta", T::Real, 0.05, "mixing tolerance", eta_check()),
                  P("members", T::Integer, 4096, "ensemble size", in_range(2, 10000000)),
                  P("max_layers", T::Integer, 20000, "layer budget", in_range(1, 100000000)),
                  P("uniform_start", T::Boolean, false, "start from uniform directions"),
                  P("c1", T::Real, 1.0, "variance constant", positive()),
                  P("c2", T::Real, 1.0, "mixing constant", positive())}});
    c.push_back({"gronwall-check",
                 "weighted incoherence envelope against its Gronwall bound on banded evolutions",
                 {P("replicates", T::Integer, 20, "independent seeds", in_range(1, 100000)),
                  P("n_f", T::Integer, 40, "output dimension", in_range(1, 100000)),
                  P("blocks", T::Integer, 6, "number of blocks", in_range(1, 10000)),
                  P("block_dim", T::Integer, 3, "parameters per block", in_range(1, 10000)),
                  P("bandwidth", T::Integer, 1, "coupling bandwidth K", in_range(0, 10000)),
                  P("scale", T::Real, 0.3, "coupling scale", non_negative()),
                  P("horizon", T::Real, 1.0, "evolution horizon", positive()),
                  P("samples", T::Integer, 21, "time samples", in_range(2, 100000)),
                  P("step", T::Real, 1e-3, "RK4 step", positive()),
                  P("weight_base", T::Real, 0.5, "envelope weight base", open_unit())}});
    c.push_back({"covariance-check",
                 "gradient flow under a rescaled loss against the time-rescaled flow",
                 {P("models", T::Text, "linear-regression,two-layer-linear,shallow-tanh", "comma separated models",
                    model_list()),
                  P("alphas", T::RealList, json::array({0.5, 2.0, 3.0}), "loss multipliers", each(positive())),
                  P("horizon", T::Real, 2.0, "training horizon", positive()),
                  P("step", T::Real, 1e-3, "integrator step", positive()),
                  P("sample_interval", T::Real, 0.1, "comparison spacing", positive()),
                  P("method", T::Text, "rk4", "rk4 or euler", one_of({"rk4", "euler"})),
                  P("data_samples", T::Integer, 8, "dataset size", in_range(1, 100000)),
                  P("inputs", T::Integer, 3, "input dimension", in_range(1, 10000)),
                  P("outputs", T::Integer, 1, "output dimension", in_range(1, 10000)),
                  P("hidden", T::Integer, 4, "hidden width", in_range(1, 10000))}});
    return c;
}

class Outputs {
public:
    explicit Outputs(std::filesystem::path dir) : dir_(std::move(dir)) {}

    std::ofstream open(const std::string& name)
    {
        std::ofstream out(dir_ / name, std::ios::binary);
        if (!out) fail(ErrorKind::IoError, "cannot write " + (dir_ / name).string());
        files_.push_back(name);
        return out;
    }
    void write_json(const std::string& name, const json& j) { open(name) << j.dump(2) << '\n'; }
    const std::vector<std::string>& files() const { return files_; }
    std::vector<std::string>& files() { return files_; }

private:
    std::filesystem::path dir_;
    std::vector<std::string> files_;
};

int I(const json& p, const char* k) { return p.at(k).get<int>(); }
double R(const json& p, const char* k) { return p.at(k).get<double>(); }
std::string S(const json& p, const char* k) { return p.at(k).get<std::string>(); }

json run_power_law(const ExperimentRecipe& r, Outputs& out)
{
    const auto& p = r.params;
    TransportSpec spec;
    spec.exponent = R(p, "exponent");
    spec.coefficient = R(p, "coefficient");
    spec.s_lo = R(p, "s_lo");
    spec.s_hi = R(p, "s_hi");
    spec.h = R(p, "h");
    spec.modes_per_bin = I(p, "modes_per_bin");
    spec.bump_width = R(p, "bump_width");
    spec.window_half_width = R(p, "window_half_width");
    spec.time_samples = I(p, "time_samples");
    spec.dissipation = S(p, "dissipation") == "linear" ? DissipationModel::linear(R(p, "gamma")) : DissipationModel::zero();
    const TransportRun run = run_manufactured_transport(spec);
    {
        auto f = out.open("shell.csv");
        write_shell_csv(f, run.series, run.flux, run.field);
    }
    out.open("power_law_fit.json") << to_json(run.fit) << '\n';
    return {{"requested_exponent", spec.exponent},
            {"requested_coefficient", spec.coefficient},
            {"fitted_exponent", run.fit.exponent},
            {"fitted_coefficient_mid", run.coefficient_mid},
            {"r2", run.fit.r2},
            {"balance_residual", run.balance_residual},
            {"balance_relative", run.max_rate > 0 ? run.balance_residual / run.max_rate : 0.0}};
}

SuiteInput suite_input(const ExperimentRecipe& r)
{
    const auto& p = r.params;
    SuiteInput in;
    in.family = S(p, "family");
    const auto coupling = S(p, "coupling");
    in.coupling = coupling == "M"           ? CouplingOperatorKind::M
                  : coupling == "rate-of-M" ? CouplingOperatorKind::RateOfM
                                            : CouplingOperatorKind::RelativeRate;
    const int samples = I(p, "samples");
    const double dt = R(p, "dt");
    const std::uint64_t seed = derive_seed(r.seed, stream_tag("condition-suite"));
    if (in.family == "residual") {
        ResidualPathSpec spec{I(p, "n"), I(p, "depth"), R(p, "epsilon"), I(p, "branch_width"), samples, dt};
        in.path = residual_condition_path(spec, seed);
    } else if (in.family == "ssm") {
        SsmPathSpec spec;
        spec.ssm.rho = R(p, "rho");
        spec.ssm.horizon = I(p, "ssm_steps");
        spec.ssm.state_dim = I(p, "state_dim");
        spec.ssm.output_dim = I(p, "output_dim");
        spec.samples = samples;
        spec.dt = dt;
        in.path = ssm_condition_path(spec, seed);
    } else if (in.family == "banded") {
        const std::vector<int> dims(6, 3);
        const auto j0 = make_incoherent_blocks(40, dims, IncoherenceProfile::geometric(0.05, 0.5, 5),
                                               derive_seed(seed, stream_tag("banded-initial")));
        const auto evo = make_banded_evolution(dims, 1, 0.3, derive_seed(seed, stream_tag("banded-evolution")));
        auto bp = simulate_banded_evolution(j0, evo, std::max(1, samples - 1) * dt, std::min(1e-3, dt), std::max(2, samples));
        in.path.jacobians = std::move(bp.jacobians);
        in.path.rates = std::move(bp.rates);
    } else {
        const auto model = make_toy_model(model_kind_from_string(split_models(S(p, "model")).front()), ToySpec{}, seed);
        FlowOptions opt;
        opt.horizon = R(p, "train_horizon");
        opt.sample_interval = dt;
        opt.throw_on_divergence = false;
        in.path = path_from_trajectory(integrate_gradient_flow(model, opt));
    }
    in.provenance = {{"seed", r.seed}, {"family", in.family}};
    return in;
}

ConditionThresholds suite_thresholds(const json& p)
{
    ConditionThresholds th;
    th.bandwidth = I(p, "bandwidth");
    th.bandedness = R(p, "bandedness_tol");
    th.incoherence_tail = R(p, "incoherence_tail");
    th.gronwall_tol = R(p, "gronwall_tol");
    th.path_bound = R(p, "path_bound");
    th.log_shift = R(p, "log_shift_tol");
    th.min_population = I(p, "min_population");
    th.weight_base = R(p, "weight_base");
    th.window_bins = I(p, "window_bins");
    th.quantile = R(p, "quantile");
    return th;
}

json run_condition_suite(const ExperimentRecipe& r, Outputs& out)
{
    const ConditionReport rep = condition_suite(suite_input(r), suite_thresholds(r.params));
    out.write_json("condition_report.json", to_json(rep));
    {
        auto f = out.open("bandedness.csv");
        write_bandedness_csv(f, rep.bandedness);
    }
    {
        auto f = out.open("envelope.csv");
        write_envelope_csv(f, rep.incoherence);
    }
    {
        auto f = out.open("couplings.csv");
        write_couplings_csv(f, rep.log_shift ? &*rep.log_shift : nullptr);
    }
    {
        auto f = out.open("path_norms.csv");
        write_path_norms_csv(f, rep.path_norms);
    }
    json summary = {{"all_pass", rep.all_pass()}, {"conditions", json::array()}};
    std::vector<std::string> missing;
    {
        auto f = out.open("condition_summary.txt");
        f << "family " << S(r.params, "family") << ", seed " << r.seed << '\n';
        for (std::size_t i = 0; i < rep.conditions.size(); ++i) {
            const auto& c = rep.conditions[i];
            f << 'C' << i + 1 << ' ' << c.name << ": score " << format_real(c.score) << " vs " << format_real(c.threshold)
              << (c.pass ? "  pass" : "  FAIL") << '\n';
            for (const auto& w : c.warnings) f << "   warning: " << w << '\n';
            summary["conditions"].push_back({{"name", c.name}, {"pass", c.pass}});
            if (!std::isfinite(c.score)) missing.push_back(c.name);
        }
    }
    if (!missing.empty()) {
        std::string names;
        for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
        fail(ErrorKind::InsufficientSamples, "diagnostics not computable: " + names);
    }
    return summary;
}

void sweep_header(std::ostream& f) { f << "epsilon,eta,L,KS,d,tau_mix,err_bulk,err_boundary,seed\n"; }

json run_depth_sweep(const ExperimentRecipe& r, Outputs& out)
{
    const auto& p = r.params;
    const auto depths = p.at("depths").get<std::vector<int>>();
    const int l_star = I(p, "l_star");
    for (int d : depths)
        if (d <= l_star) fail(ErrorKind::InvalidArgument, "every depth must exceed l_star");
    const double eps = R(p, "epsilon"), eta = R(p, "eta");
    DilutionSpec ds{I(p, "n"), eps, l_star, I(p, "window_bins"), R(p, "quantile")};
    ChainEnsembleSpec cs;
    cs.n = I(p, "chain_dim");
    cs.epsilon = eps;
    cs.members = I(p, "members");
    cs.seed = derive_seed(r.seed, stream_tag("depth-sweep-chain"));
    cs.threads = r.threads;

    auto f = out.open("depth_sweep.csv");
    sweep_header(f);
    const int reps = I(p, "replicates");
    const LogShiftDepthSpec ls{I(p, "n"), eps, I(p, "window_bins"), R(p, "quantile"), 2};
    std::vector<double> bulk, dil_bulk, boundary_scaled, ks, c0;
    for (int L : depths) {
        cs.depth = L;
        const ChainEnsemble ens = run_chain_ensemble(cs);
        const double k = berry_esseen_distance(ens.sums);
        const DilutionRun dil = run_depth_dilution(ds, L, derive_seed(r.seed, stream_tag("depth-sweep-dilution")));
        double err = 0;
        for (int i = 0; i < reps; ++i)
            err += boundary_anchored_log_shift_error(ls, L, derive_seed(r.seed, stream_tag("depth-sweep-log-shift"), i)) / reps;
        f << format_real(eps) << ',' << format_real(eta) << ',' << L << ',' << format_real(k) << ",,,"
          << format_real(err) << ',' << format_real(dil.result.boundary_contribution) << ',' << r.seed << '\n';
        bulk.push_back(err);
        dil_bulk.push_back(dil.result.bulk_err);
        boundary_scaled.push_back(dil.normalized_boundary);
        ks.push_back(k);
        c0.push_back(ens.increment_variance / (eps * eps));  // measured c0 in var >= c0 eps^2
    }
    bool decreasing = true;
    for (std::size_t i = 1; i < bulk.size(); ++i) decreasing = decreasing && bulk[i] < bulk[i - 1];
    const DepthThreshold th = depth_threshold(eps, eta, R(p, "c1"), R(p, "c2"));
    json summary = {{"err_bulk", bulk},
                    {"err_bulk_decreasing", decreasing},
                    {"dilution_bulk_err", dil_bulk},
                    {"boundary_times_L_over_C_K", boundary_scaled},
                    {"KS", ks},
                    {"increment_variance_over_eps2", c0},
                    {"L_min", th.l_min}};
    if (depths.size() >= 2) {
        std::vector<double> x(depths.begin(), depths.end());
        summary["KS_loglog_slope"] = loglog_slope(x, ks);
    }
    return summary;
}

json run_mixing_sweep(const ExperimentRecipe& r, Outputs& out)
{
    const auto& p = r.params;
    const auto eps = p.at("epsilons").get<std::vector<double>>();
    const double eta = R(p, "eta");
    auto f = out.open("mixing_sweep.csv");
    sweep_header(f);
    auto g = out.open("mixing_distance.csv");
    g << "epsilon,layer,d\n";
    json taus = json::array(), c2 = json::array();
    for (std::size_t i = 0; i < eps.size(); ++i) {
        MixingSpec ms;
        ms.n = I(p, "n");
        ms.epsilon = eps[i];
        ms.members = I(p, "members");
        ms.max_layers = I(p, "max_layers");
        ms.uniform_start = p.at("uniform_start").get<bool>();
        ms.seed = derive_seed(r.seed, stream_tag("mixing-sweep"), i);
        ms.threads = r.threads;
        const MixingEstimate est = mixing_time(ms, eta);
        const DepthThreshold th = depth_threshold(eps[i], eta, R(p, "c1"), R(p, "c2"));
        f << format_real(eps[i]) << ',' << format_real(eta) << ',' << th.l_min << ",," << format_real(est.distance.back())
          << ',';
        if (est.tau) f << *est.tau;
        f << ",,," << r.seed << '\n';
        for (std::size_t l = 0; l < est.distance.size(); ++l)
            g << format_real(eps[i]) << ',' << l << ',' << format_real(est.distance[l]) << '\n';
        taus.push_back(est.tau ? json(*est.tau) : json(nullptr));
        c2.push_back(est.mixed ? json(est.c2_estimate) : json(nullptr));
    }
    return {{"tau_mix", taus}, {"c2_estimate", c2}, {"eta", eta}};
}

json run_gronwall(const ExperimentRecipe& r, Outputs& out)
{
    const auto& p = r.params;
    GronwallSpec spec;
    spec.n_f = I(p, "n_f");
    spec.block_dims.assign(static_cast<std::size_t>(I(p, "blocks")), I(p, "block_dim"));
    spec.bandwidth = I(p, "bandwidth");
    spec.coefficient_scale = R(p, "scale");
    spec.horizon = R(p, "horizon");
    spec.samples = I(p, "samples");
    spec.step = R(p, "step");
    spec.weight_base = R(p, "weight_base");
    auto f = out.open("gronwall.csv");
    f << "replicate,seed,C_A,C_rho,growth_estimate,margin\n";
    double worst = std::numeric_limits<double>::infinity();
    const int reps = I(p, "replicates");
    for (int i = 0; i < reps; ++i) {
        const auto seed = derive_seed(r.seed, stream_tag("gronwall-check"), static_cast<std::uint64_t>(i));
        const GronwallRun run = run_gronwall_check(spec, seed);
        f << i << ',' << seed << ',' << format_real(run.coupling_norm) << ',' << format_real(run.growth_bound) << ','
          << format_real(run.report.growth_estimate) << ',' << format_real(run.margin) << '\n';
        worst = std::min(worst, run.margin);
        if (i == 0) {
            auto g = out.open("envelope.csv");
            write_envelope_csv(g, run.report);
        }
    }
    return {{"min_margin", worst}, {"replicates", reps}, {"within_bound", worst >= -1e-8}};
}

json run_covariance(const ExperimentRecipe& r, Outputs& out)
{
    const auto& p = r.params;
    ToySpec ts{I(p, "data_samples"), I(p, "inputs"), I(p, "outputs"), I(p, "hidden")};
    FlowOptions opt;
    opt.step = R(p, "step");
    opt.sample_interval = R(p, "sample_interval");
    opt.method = S(p, "method") == "euler" ? Integrator::Euler : Integrator::Rk4;
    auto f = out.open("covariance.csv");
    f << "model,alpha,deviation\n";
    double worst = 0;
    for (const auto& name : split_models(S(p, "models"))) {
        const auto model = make_toy_model(model_kind_from_string(name), ts, derive_seed(r.seed, stream_tag(name)));
        for (double a : p.at("alphas").get<std::vector<double>>()) {
            const double dev = check_time_rescaling_covariance(model, a, R(p, "horizon"), opt);
            f << name << ',' << format_real(a) << ',' << format_real(dev) << '\n';
            worst = std::max(worst, dev);
        }
    }
    return {{"max_deviation", worst}};
}

class DirectoryLock {
public:
    explicit DirectoryLock(std::filesystem::path p) : path_(std::move(p))
    {
        file_ = std::fopen(path_.c_str(), "wx");
    }
    ~DirectoryLock()
    {
        if (file_) {
            std::fclose(file_);
            std::filesystem::remove(path_);
        }
    }
    bool held() const { return file_ != nullptr; }

private:
    std::filesystem::path path_;
    std::FILE* file_ = nullptr;
};

}  // namespace

const std::vector<RecipeInfo>& recipe_catalog()
{
    static const std::vector<RecipeInfo> catalog = build_catalog();
    return catalog;
}

const RecipeInfo* find_recipe(std::string_view name)
{
    for (const auto& r : recipe_catalog())
        if (r.name == name) return &r;
    return nullptr;
}

RunOutcome run_recipe(const ExperimentRecipe& recipe, const std::filesystem::path& dir)
{
    RunOutcome outcome;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        outcome.exit_code = 1;
        outcome.error = "cannot create run directory " + dir.string() + ": " + ec.message();
        return outcome;
    }
    DirectoryLock lock(dir / ".grsd.lock");
    if (!lock.held()) {
        outcome.exit_code = 1;
        outcome.error = "run directory " + dir.string() + " is in use by another process";
        return outcome;
    }
    Outputs out(dir);
    std::string status = "ok";
    try {
        if (recipe.name == "power-law-recovery")
            outcome.summary = run_power_law(recipe, out);
        else if (recipe.name == "condition-suite")
            outcome.summary = run_condition_suite(recipe, out);
        else if (recipe.name == "residual-depth-sweep")
            outcome.summary = run_depth_sweep(recipe, out);
        else if (recipe.name == "mixing-sweep")
            outcome.summary = run_mixing_sweep(recipe, out);
        else if (recipe.name == "gronwall-check")
            outcome.summary = run_gronwall(recipe, out);
        else if (recipe.name == "covariance-check")
            outcome.summary = run_covariance(recipe, out);
        else
            fail(ErrorKind::SchemaViolation, "unknown recipe " + recipe.name);
    } catch (const std::exception& e) {
        const auto* ge = dynamic_cast<const Error*>(&e);
        const std::string kind = ge ? std::string(to_string(ge->kind())) : "RuntimeFailure";
        outcome.exit_code = 1;
        outcome.error = e.what();
        status = "failed";
        out.write_json("error.json", {{"kind", kind}, {"message", e.what()}, {"recipe", recipe.name}});
    }
    try {
        write_manifest(dir, build_manifest(recipe, dir, out.files(), status, outcome.summary));
    } catch (const std::exception& e) {
        outcome.exit_code = 1;
        outcome.error = e.what();
    }
    outcome.files = out.files();
    outcome.files.push_back("manifest.json");
    return outcome;
}

}  // namespace grsd::runner
