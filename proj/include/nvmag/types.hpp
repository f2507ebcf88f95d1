#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <string>

#include "nvmag/error.hpp"

namespace nvmag {

using Vec3 = Eigen::Vector3d;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kMu0 = 4.0e-7 * kPi;  // T m / A

// Angle between two NV symmetry axes, acos(-1/3).
inline const double kTetrahedralAngleDeg = std::acos(-1.0 / 3.0) * 180.0 / kPi;
// Half of the tetrahedral angle; the cone mirroring threshold.
inline const double kMagicAngleDeg = 0.5 * kTetrahedralAngleDeg;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

enum class Frame { Crystal, Lab };

const char* to_string(Frame frame);

// Magnetic field in tesla. The frame tag is part of the value; mixing frames
// is rejected by every operation that combines vectors.
class FieldVector {
 public:
  FieldVector() = default;
  FieldVector(const Vec3& tesla, Frame frame);
  FieldVector(double bx, double by, double bz, Frame frame)
      : FieldVector(Vec3(bx, by, bz), frame) {}

  static FieldVector zero(Frame frame) { return FieldVector(Vec3::Zero(), frame); }

  const Vec3& tesla() const { return b_; }
  double bx() const { return b_.x(); }
  double by() const { return b_.y(); }
  double bz() const { return b_.z(); }
  Frame frame() const { return frame_; }
  double norm() const { return b_.norm(); }

  FieldVector operator-() const { return FieldVector(-b_, frame_); }
  FieldVector scaled(double k) const { return FieldVector(k * b_, frame_); }

 private:
  Vec3 b_ = Vec3::Zero();
  Frame frame_ = Frame::Crystal;
};

void require_frame(const FieldVector& v, Frame expected, const char* what);
void require_same_frame(const FieldVector& a, const FieldVector& b);

FieldVector operator+(const FieldVector& a, const FieldVector& b);
FieldVector operator-(const FieldVector& a, const FieldVector& b);

// Zero-field splittings and gyromagnetic ratio, all in ordinary frequency.
struct SpinParams {
  double d_hz = 2.872e9;
  double e_hz = 8.15e6;
  double gamma_hz_per_t = 28.0e9;

  void validate() const;
};

// The two resonance frequencies of one NV orientation, nu1 <= nu2.
struct ResonancePair {
  double nu1_hz = 0.0;
  double nu2_hz = 0.0;

  ResonancePair() = default;
  ResonancePair(double a, double b);

  double splitting_hz() const { return nu2_hz - nu1_hz; }
  double center_hz() const { return 0.5 * (nu1_hz + nu2_hz); }
};

enum class AxisLabel { InPlane, OutOfPlaneInward, OutOfPlaneOutward };

const char* to_string(AxisLabel label);

inline bool is_out_of_plane(AxisLabel label) { return label != AxisLabel::InPlane; }

struct CrystalGeometry {
  std::string facet;
  std::array<Vec3, 4> axes;
  std::array<AxisLabel, 4> labels;
  Vec3 facet_normal = Vec3::UnitZ();

  // Index of the other out-of-plane axis; throws for in-plane indices.
  std::size_t out_of_plane_sibling(std::size_t index) const;
};

}  // namespace nvmag
