#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "grsd/runner.hpp"

namespace grsd::runner {

namespace {

std::string join_issues(const std::string& origin, const std::vector<ConfigIssue>& issues)
{
    std::ostringstream os;
    for (std::size_t i = 0; i < issues.size(); ++i) {
        const auto& is = issues[i];
        if (i) os << '\n';
        os << origin << ':' << is.line << ": " << (is.field.empty() ? "" : is.field + ": ") << is.message;
    }
    return os.str();
}

int line_of(const YAML::Node& node) { return node.Mark().line >= 0 ? node.Mark().line + 1 : 0; }

std::optional<long long> as_integer(const YAML::Node& n)
{
    if (!n.IsScalar()) return std::nullopt;
    const std::string s = n.Scalar();
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used, 10);
        if (used != s.size()) return std::nullopt;
        return v;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

std::optional<double> as_real(const YAML::Node& n)
{
    if (!n.IsScalar()) return std::nullopt;
    const std::string s = n.Scalar();
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v)) return std::nullopt;
        return v;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

// nullopt plus a message on type errors
std::optional<nlohmann::json> convert(const YAML::Node& n, ParamType type, std::string& why)
{
    switch (type) {
    case ParamType::Integer:
        if (auto v = as_integer(n)) return nlohmann::json(*v);
        why = "expected an integer";
        return std::nullopt;
    case ParamType::Real:
        if (auto v = as_real(n)) return nlohmann::json(*v);
        why = "expected a finite real number";
        return std::nullopt;
    case ParamType::Boolean: {
        bool b = false;
        if (n.IsScalar() && YAML::convert<bool>::decode(n, b)) return nlohmann::json(b);
        why = "expected true or false";
        return std::nullopt;
    }
    case ParamType::Text:
        if (n.IsScalar()) return nlohmann::json(n.Scalar());
        why = "expected a string";
        return std::nullopt;
    case ParamType::IntegerList:
    case ParamType::RealList: {
        if (!n.IsSequence() || n.size() == 0) {
            why = "expected a non-empty list";
            return std::nullopt;
        }
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& e : n) {
            if (type == ParamType::IntegerList) {
                auto v = as_integer(e);
                if (!v) {
                    why = "list entries must be integers";
                    return std::nullopt;
                }
                arr.push_back(*v);
            } else {
                auto v = as_real(e);
                if (!v) {
                    why = "list entries must be finite reals";
                    return std::nullopt;
                }
                arr.push_back(*v);
            }
        }
        return arr;
    }
    }
    return std::nullopt;
}

}  // namespace

std::string to_string(ParamType type)
{
    switch (type) {
    case ParamType::Integer: return "integer";
    case ParamType::Real: return "real";
    case ParamType::Boolean: return "boolean";
    case ParamType::Text: return "string";
    case ParamType::IntegerList: return "list of integers";
    case ParamType::RealList: return "list of reals";
    }
    return "?";
}

ConfigError::ConfigError(std::string origin, std::vector<ConfigIssue> issues)
    : Error(ErrorKind::SchemaViolation, join_issues(origin, issues)), origin_(std::move(origin)), issues_(std::move(issues))
{
}

ExperimentRecipe parse_config(const std::string& text, const std::string& origin)
{
    std::vector<ConfigIssue> issues;
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ConfigError(origin, {{e.mark.line >= 0 ? e.mark.line + 1 : 0, "", "malformed YAML: " + e.msg}});
    }
    if (!root.IsMap()) throw ConfigError(origin, {{root ? line_of(root) : 1, "", "top level must be a mapping"}});

    ExperimentRecipe out;
    out.origin = origin;
    static const std::set<std::string> top_keys{"recipe", "seed", "threads", "output", "params"};
    YAML::Node params;
    bool have_recipe = false;
    for (const auto& kv : root) {
        const std::string key = kv.first.as<std::string>();
        const int line = line_of(kv.first);
        if (!top_keys.count(key)) {
            issues.push_back({line, key, "unknown key (allowed: recipe, seed, threads, output, params)"});
            continue;
        }
        if (key == "recipe") {
            if (!kv.second.IsScalar()) {
                issues.push_back({line, key, "expected a recipe name"});
                continue;
            }
            out.name = kv.second.Scalar();
            have_recipe = true;
            if (!find_recipe(out.name)) {
                std::string names;
                for (const auto& r : recipe_catalog()) names += (names.empty() ? "" : ", ") + r.name;
                issues.push_back({line, key, "unknown recipe '" + out.name + "' (known: " + names + ")"});
            }
        } else if (key == "seed") {
            auto v = as_integer(kv.second);
            if (!v || *v < 0)
                issues.push_back({line, key, "expected a non-negative integer"});
            else
                out.seed = static_cast<std::uint64_t>(*v);
        } else if (key == "threads") {
            auto v = as_integer(kv.second);
            if (!v || *v < 1 || *v > 1024)
                issues.push_back({line, key, "expected an integer in [1, 1024]"});
            else
                out.threads = static_cast<int>(*v);
        } else if (key == "output") {
            if (!kv.second.IsScalar() || kv.second.Scalar().empty())
                issues.push_back({line, key, "expected a directory path"});
            else
                out.output_dir = kv.second.Scalar();
        } else {
            if (!kv.second.IsMap() && !kv.second.IsNull())
                issues.push_back({line, key, "expected a mapping of recipe parameters"});
            else
                params = kv.second;
        }
    }
    if (!have_recipe) issues.push_back({1, "recipe", "missing required key"});

    const RecipeInfo* info = have_recipe ? find_recipe(out.name) : nullptr;
    if (info) {
        std::set<std::string> seen;
        if (params && params.IsMap()) {
            for (const auto& kv : params) {
                const std::string key = kv.first.as<std::string>();
                const int line = line_of(kv.first);
                const std::string field = "params." + key;
                const ParamSpec* spec = nullptr;
                for (const auto& p : info->params)
                    if (p.name == key) spec = &p;
                if (!spec) {
                    issues.push_back({line, field, "unknown key for recipe " + info->name});
                    continue;
                }
                if (!seen.insert(key).second) {
                    issues.push_back({line, field, "duplicate key"});
                    continue;
                }
                std::string why;
                auto v = convert(kv.second, spec->type, why);
                if (!v) {
                    issues.push_back({line_of(kv.second), field, why});
                    continue;
                }
                if (spec->check)
                    if (auto msg = spec->check(*v)) {
                        issues.push_back({line_of(kv.second), field, *msg});
                        continue;
                    }
                out.params[key] = *v;
            }
        }
        for (const auto& p : info->params)
            if (!out.params.contains(p.name)) out.params[p.name] = p.default_value;
    }
    if (!issues.empty()) throw ConfigError(origin, std::move(issues));
    return out;
}

ExperimentRecipe load_config(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::IoError, "cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

nlohmann::json to_json(const ExperimentRecipe& recipe)
{
    nlohmann::json j;
    j["recipe"] = recipe.name;
    j["seed"] = recipe.seed;
    j["threads"] = recipe.threads;
    j["output"] = recipe.output_dir;
    j["params"] = recipe.params;
    return j;
}

}  // namespace grsd::runner
