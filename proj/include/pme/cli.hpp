#pragma once
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pme/error.hpp"

namespace pme::cli {

inline constexpr const char* kBuildId = "pmembed 0.1.0";

enum class OptKind { String, Int, Double, Bool, Uint64 };

struct OptionSpec {
    const char* key;    // canonical dotted key
    const char* alias;  // extra CLI spelling or nullptr
    OptKind kind;
    const char* def;  // default value as text; nullptr = required
    const char* help;
};

/// Full option table of one subcommand ("gen", "curvature", "recon", "eval",
/// "kg train", "kg eval").
std::span<const OptionSpec> schema_for(const std::string& subcommand);
std::vector<std::string> subcommand_names();

/// Resolved configuration: canonical key -> value text. Flags win over the
/// config file, which wins over defaults. Unknown keys are rejected.
struct RunConfig {
    std::string subcommand;
    std::map<std::string, std::string> values;

    const std::string& str(const std::string& key) const;
    long long integer(const std::string& key) const;
    double real(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::uint64_t uint(const std::string& key) const;
};

RunConfig resolve_config(const std::string& subcommand, std::span<const std::string> args);

/// Entry point used by main() and by in-process tests. Returns the process
/// exit code: 0 success, 1 usage error, 2 runtime error.
int dispatch(const std::vector<std::string>& args);

std::string help_text(const std::string& subcommand);

}  // namespace pme::cli
