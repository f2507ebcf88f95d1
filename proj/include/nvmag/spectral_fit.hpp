#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nvmag/levenberg_marquardt.hpp"
#include "nvmag/spin_model.hpp"

namespace nvmag {

struct DipFit {
  double center_hz = 0.0;
  double center_sigma_hz = 0.0;
  double fwhm_hz = 0.0;
  double fwhm_sigma_hz = 0.0;
  double contrast = 0.0;
  double contrast_sigma = 0.0;
  // Share of the final sum of squares attributed to this dip (points
  // closest to its center).
  double cost_contribution = 0.0;
};

struct FitOptions {
  LmOptions lm;
  // Weight residuals by 1/sqrt(counts) instead of uniformly.
  bool shot_noise_weights = false;
  bool analytic_jacobian = false;
  // One fwhm for all dips (common T2*).
  bool shared_fwhm = false;
  // Two centers closer than this fraction of the fwhm mark a degenerate fit.
  double degenerate_fraction = 0.1;
  double min_prominence = 0.005;
  // 0 selects one initial-fwhm estimate as the merge distance.
  double min_separation_hz = 0.0;
  // 0 estimates the initial width from the deepest dip.
  double initial_fwhm_hz = 0.0;
};

struct FitReport {
  std::vector<DipFit> dips;  // ascending center
  double baseline = 1.0;
  double baseline_sigma = 0.0;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;
  std::string message;
};

std::vector<double> detect_dips(const OdmrSpectrum& spec, double min_prominence,
                                double min_separation_hz);

FitReport fit_lorentzians(const OdmrSpectrum& spec, int n_dips,
                          std::span<const double> init_centers = {},
                          const FitOptions& options = {});

// Continues from a previous fit of the same spectrum (all dip parameters and
// the baseline).
FitReport refit_lorentzians(const OdmrSpectrum& spec, const FitReport& start,
                            const FitOptions& options = {});

// Fits each spectrum independently on `jobs` worker threads. The result
// order and content do not depend on `jobs`.
std::vector<FitReport> fit_many(std::span<const OdmrSpectrum> spectra, int n_dips,
                                const FitOptions& options = {}, unsigned jobs = 1);

struct PairedDips {
  ResonancePair pair;
  double nu1_sigma_hz = 0.0;
  double nu2_sigma_hz = 0.0;
  // Pair midpoint further than the tolerance from D.
  bool asymmetric = false;
};

struct DipPairing {
  std::vector<PairedDips> pairs;  // descending splitting
  bool warning = false;
  std::string message;
};

DipPairing pair_dips(std::span<const double> sorted_centers_hz, double d_hz,
                     double symmetry_tolerance_hz = 50e6);
DipPairing pair_dips(std::span<const DipFit> dips, double d_hz,
                     double symmetry_tolerance_hz = 50e6);

// Dipole polar patterns: contrast vs. half-wave-plate angle.

enum class DipoleClass { SingleDipole, DoubleDipole };

const char* to_string(DipoleClass c);

struct DipoleSample {
  double hwp_angle_deg = 0.0;
  double contrast = 0.0;
};

struct DipoleLobe {
  double amplitude = 0.0;
  double axis_deg = 0.0;  // [0, 180)
};

struct DipoleFitOptions {
  double residual_gain = 0.2;
  double amplitude_ratio = 0.2;
  // Contrast level carrying no dipolar modulation. Fixed, not fitted: with a
  // free offset a sum of two cos^2 lobes equals one offset cos^2 lobe.
  double background = 0.0;
  // Single-lobe amplitude below this fraction of the largest |contrast|
  // flags the pattern as unpolarized.
  double unpolarized_fraction = 0.05;
};

struct DipolePattern {
  std::vector<DipoleSample> samples;
  DipoleClass classification = DipoleClass::SingleDipole;
  double offset = 0.0;
  std::vector<DipoleLobe> lobes;  // one or two
  DipoleLobe single_fit;
  double single_rss = 0.0;
  double double_rss = 0.0;
  bool unpolarized = false;

  bool in_plane() const { return classification == DipoleClass::SingleDipole; }
};

double dipole_model(double angle_deg, double offset, std::span<const DipoleLobe> lobes);

DipolePattern fit_dipole_pattern(std::span<const DipoleSample> samples,
                                 const DipoleFitOptions& options = {});

// Rabi / Ramsey time traces.

struct TimeTrace {
  std::vector<double> t_s;
  std::vector<double> signal;
};

struct Estimate {
  double value = 0.0;
  double sigma = 0.0;
};

struct RabiFit {
  Estimate freq_hz;
  Estimate decay_s;
  Estimate contrast;
  double cost = 0.0;
  bool converged = false;
};

struct RamseyFit {
  Estimate detuning_hz;
  Estimate t2_star_s;
  Estimate contrast;
  double cost = 0.0;
  bool converged = false;
};

TimeTrace rabi_trace(std::span<const double> t_s, const CoherenceParams& coh,
                     std::optional<PoissonNoise> noise = std::nullopt,
                     double baseline_counts = 1e5);
TimeTrace ramsey_trace(std::span<const double> t_s, double detuning_hz,
                       const CoherenceParams& coh, RamseyEnvelope envelope,
                       std::optional<PoissonNoise> noise = std::nullopt,
                       double baseline_counts = 1e5);

RabiFit fit_rabi(const TimeTrace& trace);
RamseyFit fit_ramsey(const TimeTrace& trace, RamseyEnvelope envelope = RamseyEnvelope::Gaussian);

}  // namespace nvmag
