#pragma once

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "airid/model.hpp"
#include "airid/synthdata.hpp"
#include "airid/training.hpp"
#include "json.hpp"

namespace airid {

/// Everything a command can be configured with. The JSON form has three
/// optional sections, "synth", "model" and "train"; keys not listed in the
/// README are rejected.
struct RunConfig {
  AttributeSchema schema = AttributeSchema::desk_default();
  SplitOptions synth;
  ModelConfig model;
  TrainConfig train;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

RunConfig load_run_config(const std::optional<std::filesystem::path>& path);

enum ExitCode { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

/// Maps an exception escaping a command to its process exit code.
int exit_code_for(const std::exception& e);

/// Entry point of the `airid` tool. argv[0] is the program name.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string source_revision();

}  // namespace airid
