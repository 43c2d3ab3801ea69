#include <array>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "grsd/runner.hpp"

namespace grsd::runner {

std::string sha256_hex(std::string_view bytes)
{
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (!EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr))
        fail(ErrorKind::IoError, "SHA-256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 15]);
    }
    return out;
}

std::string sha256_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::IoError, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

nlohmann::json build_manifest(const ExperimentRecipe& recipe, const std::filesystem::path& dir,
                              const std::vector<std::string>& files, const std::string& status,
                              const nlohmann::json& summary)
{
    nlohmann::json m;
    m["manifest_version"] = 1;
    m["recipe"] = recipe.name;
    m["seed"] = recipe.seed;
    m["seed_policy"] = "component seed = splitmix64 chain over (master seed, FNV-1a 64 of the stream name, index)";
    m["params"] = recipe.params;
    m["status"] = status;
    m["summary"] = summary;
    nlohmann::json list = nlohmann::json::array();
    for (const auto& f : files) {
        const auto p = dir / f;
        list.push_back({{"path", f}, {"bytes", std::filesystem::file_size(p)}, {"sha256", sha256_file(p)}});
    }
    m["files"] = list;
    return m;
}

void write_manifest(const std::filesystem::path& dir, const nlohmann::json& manifest)
{
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) fail(ErrorKind::IoError, "cannot write manifest in " + dir.string());
    out << manifest.dump(2) << '\n';
}

}  // namespace grsd::runner
