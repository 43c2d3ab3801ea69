#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "grsd/error.hpp"

namespace grsd::runner {

enum class ParamType { Integer, Real, Boolean, Text, IntegerList, RealList };

std::string to_string(ParamType type);

struct ParamSpec {
    std::string name;
    ParamType type;
    nlohmann::json default_value;
    std::string help;
    // returns a message when the (already typed) value is out of range
    std::function<std::optional<std::string>(const nlohmann::json&)> check;
};

struct RecipeInfo {
    std::string name;
    std::string description;
    std::vector<ParamSpec> params;
};

const std::vector<RecipeInfo>& recipe_catalog();
const RecipeInfo* find_recipe(std::string_view name);

struct ConfigIssue {
    int line = 0;  // 1-based, 0 when unknown
    std::string field;
    std::string message;
};

class ConfigError : public Error {
public:
    ConfigError(std::string origin, std::vector<ConfigIssue> issues);
    const std::vector<ConfigIssue>& issues() const { return issues_; }
    const std::string& origin() const { return origin_; }

private:
    std::string origin_;
    std::vector<ConfigIssue> issues_;
};

struct ExperimentRecipe {
    std::string name;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string output_dir = "grsd-out";
    nlohmann::json params = nlohmann::json::object();  // every schema key, defaults filled in
    std::string origin;
};

ExperimentRecipe parse_config(const std::string& text, const std::string& origin = "<config>");
ExperimentRecipe load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentRecipe& recipe);

struct RunOutcome {
    int exit_code = 0;
    nlohmann::json summary = nlohmann::json::object();
    std::vector<std::string> files;  // relative to the run directory
    std::string error;
};

// Executes one recipe into `dir`; never throws for module failures, which
// become exit code 1 plus error.json. The manifest is always written last.
RunOutcome run_recipe(const ExperimentRecipe& recipe, const std::filesystem::path& dir);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

nlohmann::json build_manifest(const ExperimentRecipe& recipe, const std::filesystem::path& dir,
                              const std::vector<std::string>& files, const std::string& status,
                              const nlohmann::json& summary);
void write_manifest(const std::filesystem::path& dir, const nlohmann::json& manifest);

}  // namespace grsd::runner
