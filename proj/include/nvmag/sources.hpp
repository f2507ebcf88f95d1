#pragma once

#include <span>
#include <vector>

#include "nvmag/types.hpp"

namespace nvmag {

// Straight circular conductor in the lab frame.
struct WireSource {
  Vec3 direction = Vec3::UnitX();
  Vec3 center_m = Vec3::Zero();
  double radius_m = 0.0;
  double current_a = 0.0;

  void validate() const;
};

enum class WireModel { Infinite, FiniteSegment };

struct WireOptions {
  WireModel model = WireModel::Infinite;
  // FiniteSegment only: segment length centred on center_m, and quadrature nodes.
  double segment_length_m = 2e-3;
  int quadrature_points = 4000;
};

// Azimuthal field of the wire at `point_m`; the interior solution applies
// for r < radius. Throws on the wire axis.
FieldVector wire_field(const WireSource& src, const Vec3& point_m, const WireOptions& options = {});

// Point on the facet side of the wire at distance `standoff_m` from the axis
// and depth `depth_m` below the wire plane (lab frame, wire along +x).
Vec3 probe_point(const WireSource& src, double standoff_m, double depth_m);

FieldVector superpose(std::span<const FieldVector> fields);

struct GridSpec {
  double y_min_m = -50e-6;
  double y_max_m = 50e-6;
  double z_min_m = -50e-6;
  double z_max_m = 50e-6;
  std::size_t ny = 101;
  std::size_t nz = 101;
  double x_m = 0.0;

  void validate() const;
  std::vector<double> ys() const;
  std::vector<double> zs() const;
};

// Row-major over (z, y): node k = iz * ny + iy.
struct FieldMap {
  GridSpec grid;
  std::vector<FieldVector> vectors;
};

FieldMap field_map(const WireSource& src, const GridSpec& grid, const WireOptions& options = {},
                   unsigned jobs = 1);

// |B| statistics over a circular footprint (e.g. a waveguide mode) sampled
// on a polar grid.
struct FootprintStats {
  double mean_t = 0.0;
  double stddev_t = 0.0;
  double min_t = 0.0;
  double max_t = 0.0;
};

FootprintStats footprint_field(const WireSource& src, const Vec3& center_m, double radius_m,
                               const WireOptions& options = {}, int rings = 12, int spokes = 24);

}  // namespace nvmag
