#include "nvmag/metrics.hpp"

#include <cmath>

#include "nvmag/error.hpp"
#include "nvmag/types.hpp"

namespace nvmag {

namespace {
bool positive(double v) { return std::isfinite(v) && v > 0.0; }
}  // namespace

void SensitivityInputs::validate() const {
  if (!positive(linewidth_hz)) throw_invalid("sensitivity: linewidth must be > 0");
  if (!positive(contrast) || contrast >= 1.0) throw_invalid("sensitivity: contrast must lie in (0, 1)");
  if (!positive(count_rate_per_s)) throw_invalid("sensitivity: count rate must be > 0");
  if (!positive(gamma_hz_per_t)) throw_invalid("sensitivity: gamma must be > 0");
}

double cw_sensitivity(const SensitivityInputs& in) {
  in.validate();
  const double gamma =
      in.convention == GammaConvention::Angular ? 2.0 * kPi * in.gamma_hz_per_t : in.gamma_hz_per_t;
  return kLorentzianPrefactor * in.linewidth_hz / (gamma * in.contrast * std::sqrt(in.count_rate_per_s));
}

double linewidth_from_t2star(double t2_star_s) {
  if (!positive(t2_star_s)) throw_invalid("T2* must be > 0");
  return 1.0 / (kPi * t2_star_s);
}

double ensemble_scale(double mode_area_um2, double reference_area_um2,
                      std::optional<double> mode_dose, std::optional<double> reference_dose) {
  if (!positive(mode_area_um2) || !positive(reference_area_um2))
    throw_invalid("ensemble scale: areas must be > 0");
  double ratio = mode_area_um2 / reference_area_um2;
  if (mode_dose.has_value() != reference_dose.has_value())
    throw_invalid("ensemble scale: give both doses or neither");
  if (mode_dose) {
    if (!positive(*mode_dose) || !positive(*reference_dose))
      throw_invalid("ensemble scale: doses must be > 0");
    ratio *= *mode_dose / *reference_dose;
  }
  return ratio;
}

}  // namespace nvmag
