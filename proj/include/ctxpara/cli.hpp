#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace ctxpara::cli {

/// Runs one subcommand. Returns 0 on success, 1 on a runtime or config
/// error, 2 on a command-line usage error.
int dispatch(int argc, const char* const* argv);
int dispatch(const std::vector<std::string>& args);

/// Every recognised configuration key with its default value.
nlohmann::json default_config();

/// One message per unknown or mistyped key in `given`, using dotted paths.
std::vector<std::string> config_errors(const nlohmann::json& given);

/// Defaults overlaid with `given`. Throws ValidationError listing every bad key.
nlohmann::json resolve_config(const nlohmann::json& given);

}  // namespace ctxpara::cli
