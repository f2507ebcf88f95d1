#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "nvmag/nvmag.h"

namespace cli {

using nlohmann::json;

// Carries the process exit code.
class Failure : public std::runtime_error {
 public:
  Failure(int code, const std::string& what) : std::runtime_error(what), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

[[noreturn]] void invalid(const std::string& what);
// Converts a failed C API status into a Failure.
void check(nvmag_status status);

struct ScanConfig {
  double start_hz = 2.70e9;
  double stop_hz = 3.05e9;
  std::size_t points = 1401;
};

struct WireConfig {
  nvmag_wire wire{};
  std::vector<double> currents_a;
  nvmag_wire_options options{};
};

struct ProbeConfig {
  double standoff_m = 27e-6;
  double depth_m = 0.0;
};

struct FitConfig {
  int n_dips = 0;  // 0: twice the active orientations
  nvmag_fit_options options{};
  unsigned jobs = 1;
};

struct ReconstructionConfig {
  nvmag_reconstruct_options options{};
  // Axis index per pair rank (descending splitting); null skips the pair.
  std::vector<std::optional<std::size_t>> orientations;
  // Fit report whose first spectrum is a zero-field 2-dip fit; E is taken
  // from its splitting.
  std::string zero_field_report;
};

struct SensitivityConfig {
  std::optional<double> linewidth_hz;
  std::optional<double> t2_star_s;
  double contrast = 0.02;
  double count_rate_per_s = 1e6;
  nvmag_gamma_convention convention = NVMAG_GAMMA_ANGULAR;
  std::optional<double> mode_area_um2;
  std::optional<double> reference_area_um2;
  std::optional<double> mode_dose;
  std::optional<double> reference_dose;
};

struct RunConfig {
  nvmag_spin_params spin{};
  std::string facet = "(110)";
  nvmag_line_shape line{};
  bool noise = true;
  std::uint64_t seed = 1;
  ScanConfig scan;
  double bias_t[3] = {0.0, 0.0, 0.0};
  std::optional<WireConfig> wire;
  ProbeConfig probe;
  FitConfig fit;
  ReconstructionConfig reconstruction;
  std::optional<nvmag_grid> map;
  SensitivityConfig sensitivity;
  std::string out_dir = ".";

  int active_orientations() const;
};

RunConfig default_config();
RunConfig parse_config(const json& doc);
RunConfig load_config(const std::string& path);

json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

nvmag_hint parse_hint(const std::string& s);

}  // namespace cli
