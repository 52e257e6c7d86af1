#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace vdip::cli {

/// Environment variables named VDIP_<FLAG> (upper case, '-' as '_') supply
/// any flag, e.g. VDIP_STEPS=1500 or VDIP_KERNEL_SIZE=9x9.
inline constexpr const char* kEnvPrefix = "VDIP_";

/// Runs one subcommand. args excludes the program name. Values are layered
/// defaults < --config file < environment < explicit flags. Returns the
/// process exit code; errors are reported on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "HxW" -> {H, W}; throws ParameterError on malformed or non-positive input,
/// and on even sides when require_odd is set. A bare "K" means K x K.
std::pair<int, int> parse_size(const std::string& text, bool require_odd);

/// Flat "key = value" file; '#' starts a comment. Keys are flag names without dashes.
std::map<std::string, std::string> read_config_file(const std::string& path);

}  // namespace vdip::cli
