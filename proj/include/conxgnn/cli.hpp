#pragma once

#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "conxgnn/inception_graph.hpp"

namespace conxgnn::cli {

/// Bad flags, config keys or values. Mapped to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// "p1,f1;p2,f2;..." -> windows. Throws UsageError.
std::vector<Window> parse_windows(const std::string& text);

/// A config file is either a JSON object or `key = value` lines ('#'
/// comments). Keys are the long flag names without dashes.
std::map<std::string, std::string> parse_config_text(const std::string& text);

/// Subcommands: train, eval, synth, inspect-graph, grad-check.
/// Returns 0 on success, 1 on runtime failure, 2 on usage errors.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace conxgnn::cli
