#pragma once

#include <string>
#include <vector>

namespace cbf::cli {

// exit codes, one per failure family
inline constexpr int kOk = 0;
inline constexpr int kInternalError = 1;
inline constexpr int kConfigError = 2;
inline constexpr int kInfeasibleDesign = 3;
inline constexpr int kDivergedTraining = 4;
inline constexpr int kSimulationEscape = 5;

int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace cbf::cli
