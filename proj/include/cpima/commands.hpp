#pragma once

#include <cstdint>
#include <string>

namespace cpima {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;      // bad config, paths, shapes
inline constexpr int kExitNumerical = 3;  // NaN/divergence faults

struct CliOptions {
  std::string config_path;
  std::string data_dir;
  std::string out_dir;
  std::string run_dir;
  std::string resume_path;
  int64_t seed_override = -1;  // < 0 means "use the config seed"
};

// Dataset generation, training, and run analysis. Each returns a process
// exit code and reports problems on stderr.
int cmd_generate(const CliOptions& opt);
int cmd_train(const CliOptions& opt);
int cmd_report(const CliOptions& opt);

}  // namespace cpima
