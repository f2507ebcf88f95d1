#include "nvmag/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace nvmag {

namespace {

constexpr double kMinFieldForAngle_t = 1e-4;

double magnitude_rhs(const ResonancePair& p, const SpinParams& s) {
  const double a = p.nu1_hz, b = p.nu2_hz;
  return (a * a + b * b - a * b - s.d_hz * s.d_hz) / 3.0 - s.e_hz * s.e_hz;
}

double angle_between_deg(const Vec3& a, const Vec3& b) {
  return rad2deg(std::acos(std::clamp(a.dot(b), -1.0, 1.0)));
}

// Propagates independent sigmas on nu1/nu2 through f by central differences.
template <typename F>
double propagate(const PairedDips& p, F&& f) {
  const double h = 1e3;
  auto shifted = [&](double d1, double d2) {
    return f(ResonancePair(p.pair.nu1_hz + d1, p.pair.nu2_hz + d2));
  };
  const double d1 = (shifted(h, 0.0) - shifted(-h, 0.0)) / (2.0 * h);
  const double d2 = (shifted(0.0, h) - shifted(0.0, -h)) / (2.0 * h);
  return std::hypot(d1 * p.nu1_sigma_hz, d2 * p.nu2_sigma_hz);
}

}  // namespace

const char* to_string(HemisphereHint hint) {
  return hint == HemisphereHint::TowardFacet ? "toward" : "away";
}

double b_magnitude(const ResonancePair& pair, const SpinParams& params) {
  params.validate();
  const double rhs = magnitude_rhs(pair, params);
  const double tol = std::pow(kMinFieldForAngle_t * params.gamma_hz_per_t, 2);
  if (rhs < -tol) {
    std::ostringstream os;
    os << "inconsistent resonance pair (" << pair.nu1_hz << ", " << pair.nu2_hz
       << " Hz): field magnitude squared is negative";
    throw_numerical(os.str());
  }
  return std::sqrt(std::max(rhs, 0.0)) / params.gamma_hz_per_t;
}

double polar_delta(const ResonancePair& pair, const SpinParams& params) {
  const double v1 = pair.nu1_hz, v2 = pair.nu2_hz;
  const double d = params.d_hz, e2 = params.e_hz * params.e_hz;
  const double q = v1 * v1 + v2 * v2 - v1 * v2;
  const double num = 7.0 * d * d * d +
                     2.0 * (v1 + v2) * (2.0 * (v1 * v1 + v2 * v2) - 5.0 * v1 * v2 - 9.0 * e2) -
                     3.0 * d * (q + 9.0 * e2);
  const double den = 9.0 * (q - d * d) - 3.0 * e2;
  return num / den;
}

namespace {

double checked_ratio(const ResonancePair& pair, const SpinParams& params, double slack) {
  const double b = b_magnitude(pair, params);
  if (b <= kMinFieldForAngle_t) throw_numerical("angle undefined at near-zero field");
  const double ratio = polar_delta(pair, params) / params.d_hz;
  if (!std::isfinite(ratio) || std::abs(ratio) > 1.0 + slack) {
    std::ostringstream os;
    os << "polar angle: Delta/D = " << ratio << " is outside [-1, 1]";
    throw_numerical(os.str());
  }
  return std::clamp(ratio, -1.0, 1.0);
}

double ratio_to_deg(double r) { return rad2deg(0.5 * std::acos(std::clamp(r, -1.0, 1.0))); }

}  // namespace

double polar_angle(const ResonancePair& pair, const SpinParams& params) {
  return ratio_to_deg(checked_ratio(pair, params, 0.05));
}

Estimate b_magnitude_estimate(const PairedDips& pair, const SpinParams& params) {
  const double v = b_magnitude(pair.pair, params);
  if (pair.nu1_sigma_hz == 0.0 && pair.nu2_sigma_hz == 0.0) return {v, 0.0};
  return {v, propagate(pair, [&](const ResonancePair& p) {
            const double rhs = magnitude_rhs(p, params);
            return std::sqrt(std::max(rhs, 0.0)) / params.gamma_hz_per_t;
          })};
}

// Overshoot of Delta/D past +-1 within three sigma is clamped. Near the
// edges acos is flat in theta, so the angle sigma follows from the ratio
// sigma directly there.
Estimate polar_angle_estimate(const PairedDips& pair, const SpinParams& params) {
  if (pair.nu1_sigma_hz == 0.0 && pair.nu2_sigma_hz == 0.0) return {polar_angle(pair.pair, params), 0.0};
  const double raw = polar_delta(pair.pair, params) / params.d_hz;
  const double sr =
      propagate(pair, [&](const ResonancePair& p) { return polar_delta(p, params) / params.d_hz; });
  const double r = checked_ratio(pair.pair, params, std::max(0.05, 3.0 * sr));
  double sigma = propagate(pair, [&](const ResonancePair& p) {
    return ratio_to_deg(polar_delta(p, params) / params.d_hz);
  });
  if (std::abs(raw) + sr >= 1.0) sigma = std::max(sigma, rad2deg(0.5 * std::sqrt(2.0 * sr)));
  return {ratio_to_deg(r), sigma};
}

AzimuthSolution azimuthal_angles(double proj2_t, double proj3_t) {
  if (!std::isfinite(proj2_t) || !std::isfinite(proj3_t))
    throw_invalid("azimuthal_angles: non-finite projection");
  if (proj2_t == 0.0 && proj3_t == 0.0)
    throw_invalid("azimuthal_angles: both projections are zero");
  const double psi = deg2rad(kTetrahedralAngleDeg);
  AzimuthSolution out;
  if (proj3_t == 0.0) {
    out.phi2_deg = 90.0;
    out.phi1_deg = kTetrahedralAngleDeg - 90.0;
  } else {
    const double r = proj2_t / proj3_t;
    double phi1 = rad2deg(std::atan((1.0 - r * std::cos(psi)) / (r * std::sin(psi))));
    if (phi1 < 0.0) phi1 += 180.0;
    out.phi1_deg = phi1;
    out.phi2_deg = kTetrahedralAngleDeg - phi1;
  }
  out.alternate_phi1_deg = std::fmod(out.phi1_deg + 180.0, 360.0);
  out.alternate_phi2_deg = kTetrahedralAngleDeg - out.alternate_phi1_deg;
  return out;
}

ConeConstraint cone_from_measurement(const Vec3& axis, double theta_deg, double sigma_deg) {
  if (!(theta_deg >= 0.0 && theta_deg <= 180.0))
    throw_invalid("cone: polar angle must lie in [0, 180] degrees");
  ConeConstraint c;
  c.axis = axis.normalized();
  c.sigma_deg = std::max(0.0, sigma_deg);
  // A resonance pair cannot tell theta from 180 - theta.
  const double th = std::min(theta_deg, 180.0 - theta_deg);
  if (th > kMagicAngleDeg) {
    // Point mirror: u.n = -cos(th) against the original axis.
    c.axis = -c.axis;
    c.mirrored = true;
  }
  c.half_angle_deg = th;
  return c;
}

ConeIntersection intersect_cones(std::span<const ConeConstraint, 3> cones, double tolerance_deg) {
  for (const auto& c : cones) {
    if (std::abs(c.axis.norm() - 1.0) > 1e-9) throw_invalid("cone axis must be a unit vector");
    if (!(c.half_angle_deg >= 0.0 && c.half_angle_deg <= 90.0))
      throw_invalid("cone half-angle must lie in [0, 90] degrees");
  }

  constexpr std::array<std::array<int, 3>, 3> order = {{{0, 1, 2}, {0, 2, 1}, {1, 2, 0}}};
  ConeIntersection out;
  for (std::size_t t = 0; t < 3; ++t) {
    const auto [i, j, k] = order[t];
    const ConeConstraint& ci = cones[static_cast<std::size_t>(i)];
    const ConeConstraint& cj = cones[static_cast<std::size_t>(j)];
    const ConeConstraint& ck = cones[static_cast<std::size_t>(k)];

    const double psi = angle_between_deg(ci.axis, cj.axis);
    const double ti = ci.half_angle_deg, tj = cj.half_angle_deg;
    const double deficit = std::max(psi - (ti + tj), std::abs(ti - tj) - psi);
    if (deficit > tolerance_deg + 3.0 * std::hypot(ci.sigma_deg, cj.sigma_deg)) {
      std::ostringstream os;
      os << "cones " << i << " and " << j << " do not intersect (deficit " << deficit
         << " deg; half-angles " << ti << ", " << tj << ", axis separation " << psi << ")";
      throw_numerical(os.str());
    }

    const double g = ci.axis.dot(cj.axis);
    const double a = std::cos(deg2rad(ti)), b = std::cos(deg2rad(tj));
    const double det = 1.0 - g * g;
    if (det < 1e-12) throw_numerical("cone axes are parallel");
    const double alpha = (a - g * b) / det;
    const double beta = (b - g * a) / det;
    const Vec3 p = alpha * ci.axis + beta * cj.axis;
    const Vec3 cross = ci.axis.cross(cj.axis);
    const double disc = (1.0 - p.squaredNorm()) / cross.squaredNorm();
    // Within tolerance of tangency: take the closest approach.
    const double root = std::sqrt(std::max(disc, 0.0));
    Vec3 u1 = (p + root * cross).normalized();
    Vec3 u2 = (p - root * cross).normalized();
    const double ck_cos = std::cos(deg2rad(ck.half_angle_deg));
    const double e1 = std::abs(u1.dot(ck.axis) - ck_cos);
    const double e2 = std::abs(u2.dot(ck.axis) - ck_cos);
    out.triangle[t] = e1 <= e2 ? u1 : u2;
  }

  Vec3 sum = out.triangle[0] + out.triangle[1] + out.triangle[2];
  if (sum.norm() < 1e-12) throw_numerical("cone triangle has no defined centroid");
  out.direction = sum.normalized();
  out.triangle_diameter_deg = std::max({angle_between_deg(out.triangle[0], out.triangle[1]),
                                        angle_between_deg(out.triangle[0], out.triangle[2]),
                                        angle_between_deg(out.triangle[1], out.triangle[2])});
  return out;
}

namespace {

struct Candidate {
  std::array<std::size_t, 3> axes{};
  std::array<ConeConstraint, 3> cones;
  ConeIntersection hit;
  bool convention = true;
};

bool hint_satisfied(const Vec3& dir, const CrystalGeometry& geom, HemisphereHint hint) {
  const double z = dir.dot(geom.facet_normal);
  return hint == HemisphereHint::TowardFacet ? z <= 0.0 : z >= 0.0;
}

}  // namespace

ReconstructionResult reconstruct_vector(std::span<const AxisMeasurement> measurements,
                                        const CrystalGeometry& geom, const SpinParams& params,
                                        const ReconstructOptions& options) {
  if (measurements.size() != 3) throw_invalid("three orientations required");
  params.validate();
  for (std::size_t i = 0; i < 3; ++i) {
    if (measurements[i].axis_index >= geom.axes.size())
      throw_invalid("axis index out of range: " + std::to_string(measurements[i].axis_index));
    for (std::size_t j = 0; j < i; ++j)
      if (measurements[i].axis_index == measurements[j].axis_index)
        throw_invalid("orientations must be distinct axes");
  }

  ReconstructionResult out;
  for (std::size_t i = 0; i < 3; ++i) {
    out.axis_magnitude_t[i] = b_magnitude_estimate(measurements[i].pair, params);
    out.axis_theta_deg[i] = polar_angle_estimate(measurements[i].pair, params);
  }

  // Inverse-variance weighted magnitude; plain mean without sigmas.
  const bool weighted = std::all_of(out.axis_magnitude_t.begin(), out.axis_magnitude_t.end(),
                                    [](const Estimate& e) { return e.sigma > 0.0; });
  if (weighted) {
    double wsum = 0.0, acc = 0.0;
    for (const auto& e : out.axis_magnitude_t) {
      const double w = 1.0 / (e.sigma * e.sigma);
      wsum += w;
      acc += w * e.value;
    }
    out.magnitude_t = acc / wsum;
    out.magnitude_sigma_t = 1.0 / std::sqrt(wsum);
  } else {
    double mean = 0.0;
    for (const auto& e : out.axis_magnitude_t) mean += e.value / 3.0;
    double var = 0.0;
    for (const auto& e : out.axis_magnitude_t) var += (e.value - mean) * (e.value - mean) / 2.0;
    out.magnitude_t = mean;
    out.magnitude_sigma_t = std::sqrt(var / 3.0);
  }

  // Axis assignments to try.
  std::vector<std::array<std::size_t, 3>> axis_sets;
  {
    std::array<std::vector<std::size_t>, 3> choices;
    for (std::size_t i = 0; i < 3; ++i) {
      const std::size_t a = measurements[i].axis_index;
      choices[i].push_back(a);
      if (options.resolve_out_of_plane && is_out_of_plane(geom.labels[a]))
        choices[i].push_back(geom.out_of_plane_sibling(a));
    }
    for (std::size_t a : choices[0])
      for (std::size_t b : choices[1])
        for (std::size_t c : choices[2])
          if (a != b && a != c && b != c) axis_sets.push_back({a, b, c});
  }

  std::optional<Error> first_error;
  bool any_intersection = false;
  auto evaluate = [&](const std::array<std::size_t, 3>& axes,
                      const std::array<ConeConstraint, 3>& cones,
                      bool convention) -> std::optional<Candidate> {
    try {
      Candidate c;
      c.axes = axes;
      c.cones = cones;
      c.hit = intersect_cones(std::span<const ConeConstraint, 3>(c.cones),
                              options.intersect_tolerance_deg);
      c.convention = convention;
      any_intersection = true;
      if (!hint_satisfied(c.hit.direction, geom, options.hint)) return std::nullopt;
      return c;
    } catch (const Error& e) {
      if (!first_error) first_error = e;
      return std::nullopt;
    }
  };
  auto better = [](const std::optional<Candidate>& a, const std::optional<Candidate>& b) {
    if (!b) return false;
    return !a || b->hit.triangle_diameter_deg < a->hit.triangle_diameter_deg;
  };

  std::optional<Candidate> best;
  for (const auto& axes : axis_sets) {
    std::array<ConeConstraint, 3> cones;
    for (std::size_t i = 0; i < 3; ++i)
      cones[i] = cone_from_measurement(geom.axes[axes[i]], out.axis_theta_deg[i].value,
                                       out.axis_theta_deg[i].sigma);
    auto cand = evaluate(axes, cones, true);
    if (better(best, cand)) best = cand;
  }

  if (!best || best->hit.triangle_diameter_deg > options.low_confidence_deg) {
    std::optional<Candidate> alt;
    for (const auto& axes : axis_sets) {
      for (int signs = 0; signs < 8; ++signs) {
        std::array<ConeConstraint, 3> cones;
        for (std::size_t i = 0; i < 3; ++i) {
          const bool flip = (signs >> i) & 1;
          cones[i].axis = flip ? Vec3(-geom.axes[axes[i]]) : geom.axes[axes[i]];
          cones[i].mirrored = flip;
          cones[i].half_angle_deg = out.axis_theta_deg[i].value;
          cones[i].sigma_deg = out.axis_theta_deg[i].sigma;
        }
        auto cand = evaluate(axes, cones, false);
        if (better(alt, cand)) alt = cand;
      }
    }
    if (better(best, alt)) {
      best = alt;
      out.convention_overridden = true;
    }
  }

  if (!best) {
    if (any_intersection) {
      throw_invalid(std::string("inconsistent hint: no intersecting cone configuration points ") +
                    (options.hint == HemisphereHint::TowardFacet ? "toward" : "away from") +
                    " the facet");
    }
    if (first_error) throw *first_error;
    throw_numerical("cone intersection failed");
  }

  out.axis_indices = best->axes;
  out.cones = best->cones;
  out.triangle = best->hit.triangle;
  out.triangle_diameter_deg = best->hit.triangle_diameter_deg;
  out.low_confidence = out.triangle_diameter_deg > options.low_confidence_deg;

  const Vec3 u = best->hit.direction;
  out.b_crystal = FieldVector(out.magnitude_t * u, Frame::Crystal);

  double sig2 = 0.0;
  for (const auto& c : out.cones) sig2 += c.sigma_deg * c.sigma_deg / 3.0;
  const double half_d = 0.5 * out.triangle_diameter_deg;
  out.direction_sigma_deg = std::sqrt(sig2 + half_d * half_d);
  const double sd = deg2rad(out.direction_sigma_deg);
  for (int k = 0; k < 3; ++k) {
    const double radial = out.magnitude_sigma_t * u(k);
    const double tangential = out.magnitude_t * sd * std::sqrt(std::max(0.0, 1.0 - u(k) * u(k)));
    out.b_sigma_t(k) = std::hypot(radial, tangential);
  }

  for (std::size_t i = 0; i < 3; ++i) {
    const double measured =
        out.axis_magnitude_t[i].value * std::cos(deg2rad(out.cones[i].half_angle_deg));
    out.residual_t[i] = out.b_crystal.tesla().dot(out.cones[i].axis) - measured;
  }

  // Azimuth in the facet plane when both in-plane axes were used.
  std::vector<std::size_t> in_plane;
  for (std::size_t i = 0; i < 3; ++i)
    if (geom.labels[out.axis_indices[i]] == AxisLabel::InPlane) in_plane.push_back(i);
  if (in_plane.size() == 2) {
    // Measured projections, not the centroid's.
    auto proj = [&](std::size_t i) {
      return out.axis_magnitude_t[i].value * std::cos(deg2rad(out.axis_theta_deg[i].value));
    };
    const double p2 = proj(in_plane[0]);
    const double p3 = proj(in_plane[1]);
    if (p2 != 0.0 || p3 != 0.0) out.azimuth = azimuthal_angles(p2, p3);
  }

  out.b_lab = crystal_to_lab(out.b_crystal, geom, options.polarization_reference_deg);
  return out;
}

FieldDifference vector_difference(const FieldVector& a, const Vec3& sigma_a, const FieldVector& b,
                                  const Vec3& sigma_b) {
  FieldDifference out;
  out.delta = a - b;
  out.magnitude_t = out.delta.norm();
  const Vec3 var = sigma_a.cwiseAbs2() + sigma_b.cwiseAbs2();
  if (out.magnitude_t > 0.0) {
    const Vec3 unit = out.delta.tesla() / out.magnitude_t;
    out.magnitude_sigma_t = std::sqrt(unit.cwiseAbs2().dot(var));
  } else {
    out.magnitude_sigma_t = std::sqrt(var.sum() / 3.0);
  }
  return out;
}

FieldDifference vector_difference(const ReconstructionResult& a, const ReconstructionResult& b) {
  return vector_difference(a.b_crystal, a.b_sigma_t, b.b_crystal, b.b_sigma_t);
}

Estimate field_per_current(const Estimate& slope_hz_per_a, const SpinParams& params) {
  params.validate();
  return {std::abs(slope_hz_per_a.value) / params.gamma_hz_per_t,
          slope_hz_per_a.sigma / params.gamma_hz_per_t};
}

CurrentResponse fit_current_response(std::span<const CurrentSample> samples,
                                     const SpinParams& params) {
  if (samples.size() < 2) throw_invalid("current response: need at least 2 samples");
  const double n = static_cast<double>(samples.size());
  double mx = 0.0, my = 0.0;
  for (const auto& s : samples) {
    if (!std::isfinite(s.current_a) || !std::isfinite(s.resonance_hz))
      throw_invalid("current response: non-finite sample");
    mx += s.current_a / n;
    my += s.resonance_hz / n;
  }
  double sxx = 0.0, sxy = 0.0;
  for (const auto& s : samples) {
    sxx += (s.current_a - mx) * (s.current_a - mx);
    sxy += (s.current_a - mx) * (s.resonance_hz - my);
  }
  if (!(sxx > 1e-30 * std::max(1.0, mx * mx)))
    throw_invalid("current response: singular design (fewer than 2 distinct currents)");

  CurrentResponse out;
  out.samples.assign(samples.begin(), samples.end());
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double ssr = 0.0;
  for (const auto& s : samples) {
    const double r = s.resonance_hz - (intercept + slope * s.current_a);
    ssr += r * r;
  }
  const double s2 = samples.size() > 2 ? ssr / (n - 2.0) : 0.0;
  out.slope_hz_per_a = {slope, std::sqrt(s2 / sxx)};
  out.intercept_hz = {intercept, std::sqrt(s2 * (1.0 / n + mx * mx / sxx))};
  out.field_per_current_t_per_a = field_per_current(out.slope_hz_per_a, params);
  return out;
}

namespace {

Eigen::Matrix3d rotation_about_normal(const CrystalGeometry& geom, double deg) {
  if (geom.facet != "(110)") throw_invalid("crystal_to_lab: geometry must come from nv_axes_for_facet");
  return Eigen::AngleAxisd(deg2rad(deg), geom.facet_normal).toRotationMatrix();
}

}  // namespace

FieldVector crystal_to_lab(const FieldVector& v, const CrystalGeometry& geom,
                           double polarization_reference_deg) {
  require_frame(v, Frame::Crystal, "crystal_to_lab");
  return FieldVector(rotation_about_normal(geom, polarization_reference_deg) * v.tesla(), Frame::Lab);
}

FieldVector lab_to_crystal(const FieldVector& v, const CrystalGeometry& geom,
                           double polarization_reference_deg) {
  require_frame(v, Frame::Lab, "lab_to_crystal");
  return FieldVector(rotation_about_normal(geom, polarization_reference_deg).transpose() * v.tesla(),
                     Frame::Crystal);
}

}  // namespace nvmag
