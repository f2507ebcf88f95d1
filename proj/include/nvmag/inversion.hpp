#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nvmag/spectral_fit.hpp"
#include "nvmag/types.hpp"

namespace nvmag {

// Field magnitude from one resonance pair:
//   (gamma B)^2 = (nu1^2 + nu2^2 - nu1 nu2 - D^2) / 3 - E^2.
// Slightly negative right-hand sides (within (0.1 mT * gamma)^2) clamp to 0.
double b_magnitude(const ResonancePair& pair, const SpinParams& params);

// The Delta expression whose ratio to D approximates cos(2 theta).
double polar_delta(const ResonancePair& pair, const SpinParams& params);

// Polar angle of the field against the NV axis, degrees in [0, 90].
double polar_angle(const ResonancePair& pair, const SpinParams& params);

// First-order propagation of independent nu1/nu2 sigmas.
Estimate b_magnitude_estimate(const PairedDips& pair, const SpinParams& params);
Estimate polar_angle_estimate(const PairedDips& pair, const SpinParams& params);

struct AzimuthSolution {
  double phi1_deg = 0.0;
  double phi2_deg = 0.0;
  // Antiparallel in-plane direction with the same projection ratio.
  double alternate_phi1_deg = 0.0;
  double alternate_phi2_deg = 0.0;
};

// In-plane azimuths against two in-plane NV axes 109.47 degrees apart, from
// the field projections on those axes.
AzimuthSolution azimuthal_angles(double proj2_t, double proj3_t);

struct ConeConstraint {
  Vec3 axis = Vec3::UnitZ();
  double half_angle_deg = 0.0;
  double sigma_deg = 0.0;
  bool mirrored = false;
};

// Point-mirrors cones wider than the magic angle: (n, theta) becomes
// (-n, theta) with mirrored set, which equals (n, 180 - theta).
ConeConstraint cone_from_measurement(const Vec3& axis, double theta_deg, double sigma_deg);

struct ConeIntersection {
  Vec3 direction = Vec3::UnitZ();
  std::array<Vec3, 3> triangle;
  double triangle_diameter_deg = 0.0;
};

// Pairwise cone intersections and their normalized centroid. Pairs whose
// geometric deficit is within `tolerance_deg` plus three combined sigmas are
// treated as tangent.
ConeIntersection intersect_cones(std::span<const ConeConstraint, 3> cones,
                                 double tolerance_deg = 0.5);

enum class HemisphereHint { TowardFacet, AwayFromFacet };

const char* to_string(HemisphereHint hint);

struct AxisMeasurement {
  std::size_t axis_index = 0;  // into CrystalGeometry::axes
  PairedDips pair;
};

struct ReconstructOptions {
  HemisphereHint hint = HemisphereHint::TowardFacet;
  // An out-of-plane tag may be moved to its sibling axis; the two
  // out-of-plane orientations are not told apart by dipole patterns.
  bool resolve_out_of_plane = true;
  double low_confidence_deg = 10.0;
  // Measured angles near 90 degrees carry a bias of about a degree from the
  // E term, which can leave nearly tangent cones slightly apart.
  double intersect_tolerance_deg = 3.0;
  double polarization_reference_deg = 0.0;
};

struct ReconstructionResult {
  FieldVector b_crystal;
  std::optional<FieldVector> b_lab;
  Vec3 b_sigma_t = Vec3::Zero();
  std::array<Vec3, 3> triangle;
  double triangle_diameter_deg = 0.0;
  double magnitude_t = 0.0;
  double magnitude_sigma_t = 0.0;
  double direction_sigma_deg = 0.0;

  std::array<std::size_t, 3> axis_indices{};
  std::array<ConeConstraint, 3> cones;
  std::array<Estimate, 3> axis_magnitude_t;
  std::array<Estimate, 3> axis_theta_deg;
  // Implied minus measured projection on each cone axis.
  std::array<double, 3> residual_t{};
  std::optional<AzimuthSolution> azimuth;

  bool low_confidence = false;
  // The mirroring convention failed and another sign assignment was used.
  bool convention_overridden = false;
};

ReconstructionResult reconstruct_vector(std::span<const AxisMeasurement> measurements,
                                        const CrystalGeometry& geom, const SpinParams& params,
                                        const ReconstructOptions& options = {});

struct FieldDifference {
  FieldVector delta;
  double magnitude_t = 0.0;
  double magnitude_sigma_t = 0.0;
};

// a - b, with propagated magnitude uncertainty.
FieldDifference vector_difference(const ReconstructionResult& a, const ReconstructionResult& b);
FieldDifference vector_difference(const FieldVector& a, const Vec3& sigma_a, const FieldVector& b,
                                  const Vec3& sigma_b);

struct CurrentSample {
  double current_a = 0.0;
  double resonance_hz = 0.0;
};

struct CurrentResponse {
  std::vector<CurrentSample> samples;
  Estimate slope_hz_per_a;
  Estimate intercept_hz;
  Estimate field_per_current_t_per_a;
};

CurrentResponse fit_current_response(std::span<const CurrentSample> samples,
                                     const SpinParams& params);

// Slope to field-per-current, |alpha| / gamma.
Estimate field_per_current(const Estimate& slope_hz_per_a, const SpinParams& params);

// The crystal basis of nv_axes_for_facet is already lab aligned; the
// reference angle rotates about the facet normal for HWP-offset calibration.
FieldVector crystal_to_lab(const FieldVector& v, const CrystalGeometry& geom,
                           double polarization_reference_deg = 0.0);
FieldVector lab_to_crystal(const FieldVector& v, const CrystalGeometry& geom,
                           double polarization_reference_deg = 0.0);

}  // namespace nvmag
