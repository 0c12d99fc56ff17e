#pragma once

#include "endodyn/engine.hpp"

#include <filesystem>
#include <string>

namespace endodyn {

inline constexpr const char* kVersionTag = "endodyn/0.1.0";
inline constexpr int kSchemaVersion = 1;

// 17 significant digits: enough to round-trip any double bit-exactly.
std::string format_g17(double v);

// Write-temp-then-rename so readers never observe a partial file.
void atomic_write(const std::filesystem::path& path, const std::string& content);

// Header "step,agent_0,...,agent_{m-1}", one row per retained step.
std::string trajectory_csv(const Trajectory& traj);

}  // namespace endodyn
