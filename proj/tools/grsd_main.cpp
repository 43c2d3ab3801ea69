#include <cstdlib>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "grsd/runner.hpp"

namespace {

namespace rn = grsd::runner;

constexpr int exit_schema = 2;
constexpr int exit_runtime = 1;

std::optional<std::string> env(const char* name)
{
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

int report_config_error(const rn::ConfigError& e)
{
    std::cerr << "invalid config:\n" << e.what() << '\n';
    return exit_schema;
}

int cmd_validate(const std::string& path)
{
    try {
        const auto recipe = rn::load_config(path);
        std::cout << rn::to_json(recipe).dump(2) << '\n';
        return 0;
    } catch (const rn::ConfigError& e) {
        return report_config_error(e);
    } catch (const grsd::Error& e) {
        std::cerr << e.what() << '\n';
        return exit_schema;
    }
}

int cmd_list()
{
    for (const auto& r : rn::recipe_catalog()) {
        std::cout << r.name << "\n    " << r.description << '\n';
        for (const auto& p : r.params)
            std::cout << "    " << p.name << " (" << rn::to_string(p.type) << ", default " << p.default_value.dump()
                      << "): " << p.help << '\n';
    }
    return 0;
}

int cmd_run(const std::string& path, std::optional<std::string> out, std::optional<std::uint64_t> seed,
            std::optional<int> threads)
{
    rn::ExperimentRecipe recipe;
    try {
        recipe = rn::load_config(path);
    } catch (const rn::ConfigError& e) {
        return report_config_error(e);
    } catch (const grsd::Error& e) {
        std::cerr << e.what() << '\n';
        return exit_schema;
    }
    // flags beat environment, environment beats the config file
    if (!out) out = env("GRSD_OUT_DIR");
    if (out) recipe.output_dir = *out;
    if (seed) recipe.seed = *seed;
    if (!threads) {
        if (auto t = env("GRSD_THREADS")) {
            try {
                std::size_t used = 0;
                threads = std::stoi(*t, &used);
                if (used != t->size()) throw std::invalid_argument("trailing characters");
            } catch (const std::exception&) {
                std::cerr << "GRSD_THREADS must be a positive integer, got '" << *t << "'\n";
                return exit_schema;
            }
        }
    }
    if (threads) {
        if (*threads < 1) {
            std::cerr << "thread count must be >= 1\n";
            return exit_schema;
        }
        recipe.threads = *threads;
    }

    const auto outcome = rn::run_recipe(recipe, recipe.output_dir);
    if (outcome.exit_code != 0) {
        std::cerr << "run failed: " << outcome.error << '\n';
        return exit_runtime;
    }
    std::cout << recipe.name << " -> " << recipe.output_dir << '\n' << outcome.summary.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"grsd: spectral shell dynamics laboratory"};
    app.require_subcommand(1);

    std::string run_config, validate_config;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;

    auto* run = app.add_subcommand("run", "run one experiment recipe");
    run->add_option("config", run_config, "YAML config")->required();
    run->add_option("--out", out_dir, "output directory (env GRSD_OUT_DIR)");
    run->add_option("--seed", seed, "master seed override");
    run->add_option("--threads", threads, "worker threads (env GRSD_THREADS)");

    auto* validate = app.add_subcommand("validate", "check a config and print it with defaults resolved");
    validate->add_option("config", validate_config, "YAML config")->required();

    auto* list = app.add_subcommand("list-recipes", "show recipes and their parameters");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_schema;
    }
    if (*run) return cmd_run(run_config, out_dir, seed, threads);
    if (*validate) return cmd_validate(validate_config);
    if (*list) return cmd_list();
    return exit_schema;
}
