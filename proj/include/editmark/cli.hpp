#pragma once

// Command-line front end. Exit codes: 0 success, 2 usage, 3 data or parse
// error, 4 numeric failure. Failures print {"error": code, "message": text}
// to the error stream.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "editmark/attacks.hpp"
#include "editmark/editor.hpp"
#include "editmark/error.hpp"
#include "editmark/toymodel.hpp"

namespace editmark {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

int exit_code_for(ErrorCode code);

struct RunConfig {
  std::string subcommand;
  std::optional<std::uint64_t> seed;
  std::string model_in;
  std::string model_out;
  std::string config_out;
  std::string trace_out;
  std::string manifest;
  std::string csv_out;
  std::string summary_out;
  std::string watermark_hex;
  std::string expected_hex;
  std::optional<std::size_t> bit_length;
  int n = 89;
  int m = 5;
  ModelConfig model;
  EditConfig edit;
  AttackSpec attack;
  std::optional<int> workers;
  bool timings = false;
  int verbosity = 0;

  bool operator==(const RunConfig&) const = default;
};

nlohmann::ordered_json run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace editmark
