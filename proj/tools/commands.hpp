#pragma once

#include <optional>
#include <string>
#include <vector>

#include "config.hpp"

namespace cli {

struct SimulateArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

struct FitArgs {
  std::vector<std::string> inputs;
  std::optional<std::string> config;
  std::optional<int> n_dips;
  std::optional<unsigned> jobs;
  std::optional<std::string> out;
  bool allow_partial = false;
};

struct ReconstructArgs {
  std::vector<std::string> inputs;
  std::optional<std::string> config;
  std::optional<std::string> hint;
  std::optional<std::string> out;
};

struct WiremapArgs {
  std::string config;
  std::optional<unsigned> jobs;
  std::optional<std::string> out;
};

struct SensitivityArgs {
  std::string config;
  std::optional<std::string> out;
};

int cmd_simulate(const SimulateArgs& args);
int cmd_fit(const FitArgs& args);
int cmd_reconstruct(const ReconstructArgs& args);
int cmd_wiremap(const WiremapArgs& args);
int cmd_sensitivity(const SensitivityArgs& args);

}  // namespace cli
