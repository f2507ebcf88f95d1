#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "nvmag/types.hpp"

namespace nvmag {

struct LineShapeParams {
  double fwhm_hz = 5.27e6;
  double contrast = 0.02;
  double baseline_counts_per_s = 1.0e5;
  // Relative dip depth per orientation (polarization selectivity); 0 drops
  // that orientation from the spectrum.
  std::array<double, 4> axis_weights = {1.0, 1.0, 1.0, 1.0};

  void validate() const;
};

struct CoherenceParams {
  double t2_star_s = 60.4e-9;
  double rabi_freq_hz = 4.54e6;
  double rabi_decay_s = 570e-9;
  double rabi_contrast = 0.119;

  void validate() const;
};

enum class RamseyEnvelope { Gaussian, Exponential };

// Normalized PL on a strictly increasing frequency grid. counts_per_s is
// empty for noiseless spectra.
struct OdmrSpectrum {
  std::vector<double> freqs_hz;
  std::vector<double> signal;
  std::vector<double> counts_per_s;

  std::size_t size() const { return freqs_hz.size(); }
  void validate(std::size_t min_points = 8) const;
};

struct PoissonNoise {
  std::uint64_t seed = 0;
};

// Four <111> axes in a lab-aligned basis: x along the current, y along the
// waveguide polarization axis, z along the outward (110) normal.
CrystalGeometry nv_axes_for_facet(std::string_view facet);

// Unit vector perpendicular to `axis`; fixes the E-term orientation of the
// NV Hamiltonian built on that axis.
Vec3 transverse_reference(const Vec3& axis);

// Field of the given magnitude at polar angle `theta_deg` from `axis` and
// azimuth `azimuth_deg` measured from transverse_reference(axis).
FieldVector field_at_polar_angle(const Vec3& axis, double magnitude_t, double theta_deg,
                                 double azimuth_deg);

// Eigenvalues (Hz, ascending) of D Sz^2 + E (Sx^2 - Sy^2) + gamma B.S with z
// quantized along `axis`.
std::array<double, 3> hamiltonian_eigenvalues(const FieldVector& b, const Vec3& axis,
                                              const SpinParams& params);

ResonancePair resonance_frequencies(const FieldVector& b, const Vec3& axis,
                                    const SpinParams& params);

std::vector<double> linear_grid(double start_hz, double stop_hz, std::size_t points);

double lorentzian(double f, double center, double fwhm);

OdmrSpectrum odmr_spectrum(const FieldVector& b, const CrystalGeometry& geom,
                           const SpinParams& params, const LineShapeParams& line,
                           std::span<const double> scan,
                           std::optional<PoissonNoise> noise = std::nullopt);

double rabi_signal(double t_s, const CoherenceParams& coh);

double ramsey_signal(double t_s, double detuning_hz, const CoherenceParams& coh,
                     RamseyEnvelope envelope = RamseyEnvelope::Gaussian);

// Applies Poisson counting noise to a normalized trace; returns signal
// renormalized by the expected baseline.
std::vector<double> apply_poisson(std::span<const double> normalized, double baseline_counts,
                                  std::uint64_t seed, std::vector<double>* counts = nullptr);

}  // namespace nvmag
