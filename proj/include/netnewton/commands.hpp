#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "netnewton/config.hpp"

namespace netnewton {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitRuntime = 2,
  kExitVerify = 3,
};

// Environment variable naming the default output directory.
inline constexpr const char* kOutputEnvVar = "NETNEWTON_OUT";

struct CommandOptions {
  std::optional<std::uint64_t> seed_override;
  std::optional<std::filesystem::path> out_dir;
  bool quiet = false;
};

// --out, then outputs.directory, then $NETNEWTON_OUT, then ./netnewton_out.
std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg, const CommandOptions& opts);

enum class CheckStatus { pass, fail, not_applicable };

struct VerifyCheck {
  std::string name;
  CheckStatus status = CheckStatus::pass;
  double measured = 0.0;
  std::string detail;
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;
  bool ok() const;
};

// Runs the invariant suites on the configured instance.
VerifyReport verify_instance(const ExperimentConfig& cfg, std::optional<std::uint64_t> seed_override);
void write_verify_report(std::ostream& out, const VerifyReport& report);

// Each returns an ExitCode; diagnostics go to `err`, summaries to `out`.
int cmd_run(const std::filesystem::path& config, const CommandOptions& opts, std::ostream& out,
            std::ostream& err);
int cmd_sweep(const std::filesystem::path& config, const CommandOptions& opts, std::ostream& out,
              std::ostream& err);
int cmd_verify(const std::filesystem::path& config, const CommandOptions& opts, std::ostream& out,
               std::ostream& err);
int cmd_parse_data(const std::filesystem::path& file, bool zero_as_negative, std::ostream& out,
                   std::ostream& err);

}  // namespace netnewton
