#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace endodyn {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;
inline constexpr int kExitViolation = 4;

struct CliOptions {
    std::string config_path;
    std::optional<std::string> out_dir;           // overrides config output_dir
    std::optional<std::uint64_t> seed_override;   // overrides config master_seed
};

// Each command returns an exit code and reports errors on stderr.
int cmd_simulate(const CliOptions& opts);
int cmd_diagnose(const CliOptions& opts);
int cmd_sweep(const CliOptions& opts);

}  // namespace endodyn
