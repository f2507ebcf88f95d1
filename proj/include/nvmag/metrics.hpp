#pragma once

#include <optional>

namespace nvmag {

inline constexpr double kWaveguideModeAreaUm2 = 456.0;
inline constexpr double kConfocalAreaUm2 = 0.366;

// How gamma enters the sensitivity denominator. Angular multiplies the
// ordinary-frequency gamma by 2 pi, as the formula is written in the source
// literature (gamma = 2 pi x 28 GHz/T); Ordinary uses it as given.
enum class GammaConvention { Angular, Ordinary };

struct SensitivityInputs {
  double linewidth_hz = 0.0;
  double contrast = 0.0;
  double count_rate_per_s = 0.0;
  double gamma_hz_per_t = 28.0e9;
  GammaConvention convention = GammaConvention::Angular;

  void validate() const;
};

// Shot-noise-limited CW-ODMR sensitivity in T/sqrt(Hz),
//   eta = 4 / (3 sqrt 3) * dnu / (gamma C sqrt N).
double cw_sensitivity(const SensitivityInputs& in);

inline constexpr double kLorentzianPrefactor = 0.76980035891950104;  // 4 / (3 sqrt 3)

double linewidth_from_t2star(double t2_star_s);

// Ratio of addressed NV populations for uniform areal density. With doses
// (implantation fluence, any consistent unit) the ratio is scaled by
// mode_dose / reference_dose.
double ensemble_scale(double mode_area_um2, double reference_area_um2,
                      std::optional<double> mode_dose = std::nullopt,
                      std::optional<double> reference_dose = std::nullopt);

}  // namespace nvmag
