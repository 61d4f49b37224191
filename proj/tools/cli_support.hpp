#pragma once

#include <cstdint>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

namespace chc::cli {

inline constexpr const char* kToolName = "chc";
#ifdef CHC_VERSION
inline constexpr const char* kVersion = CHC_VERSION;
#else
inline constexpr const char* kVersion = "0.0.0";
#endif

std::uint64_t fnv1a(const std::string& text);

// Name of the pipeline stage currently running, reported with errors.
class Stage {
 public:
  explicit Stage(std::string name);
  ~Stage();
  // The stage an exception escaped from, else the running one.
  static const std::string& current();

 private:
  std::string previous_;
  int uncaught_;
};

// Fills options that were not given on the command line from a JSON object.
// Keys are long option names with '-' or '_'; a section named after the
// subcommand overrides top-level keys.
void apply_json_config(CLI::App& command, const nlohmann::json& config);

// Values of the options that were given (flag or config), as strings keyed by
// option name. Options that do not change results (config, out, threads) are
// left out; defaults are fixed by the tool version.
nlohmann::json effective_config(const CLI::App& command);

struct Provenance {
  std::string command;
  nlohmann::json config;
  std::string hash;  // 16 hex digits

  static Provenance from(const CLI::App& command);
  // "chc 0.3.0 command=eigs config=0123456789abcdef"
  std::string comment() const;
  // JSON text stored in binary container headers.
  std::string meta() const;
  void stamp(nlohmann::json& doc) const;
};

void write_json(const std::string& path, const nlohmann::json& doc);

// --threads if positive, else CHC_THREADS, else the OpenMP default.
void configure_threads(int requested);

}  // namespace chc::cli
