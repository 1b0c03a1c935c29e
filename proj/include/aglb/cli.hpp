#pragma once

// Command-line front end. Every batch command resolves one configuration
// (embedded defaults, optional --config file, --set overrides and command
// flags), writes its artifacts under <root>/<command>-<hash12>/ and prints
// that directory on `out`. Errors go to `err` as one JSON line.

#include <iosfwd>
#include <string>
#include <vector>

#include "aglb/lstm.hpp"

namespace aglb::cli {

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kInvalid = 3 };

// `args` excludes the program name. The output root is --out-root, else
// $AGLB_RUN_DIR, else "runs".
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// "long_nested", "LONG-NESTED" and "Long-Nested" all name the same task.
std::string canonical_task(const std::string& name);

// "none" or comma-separated "layer:index", optionally suffixed "/h".
lm::AblationMask parse_mask(const std::string& text);
std::vector<lm::UnitId> parse_units(const std::vector<std::string>& items);

}  // namespace aglb::cli
