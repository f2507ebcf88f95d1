#include "nvmag/sources.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace nvmag {

void WireSource::validate() const {
  if (!direction.allFinite() || std::abs(direction.norm() - 1.0) > 1e-9)
    throw_invalid("wire direction must be a unit vector");
  if (!center_m.allFinite()) throw_invalid("wire center must be finite");
  if (!(radius_m >= 0.0) || !std::isfinite(radius_m)) throw_invalid("wire radius must be >= 0");
  if (!std::isfinite(current_a)) throw_invalid("wire current must be finite");
}

namespace {

FieldVector infinite_wire(const WireSource& src, const Vec3& point) {
  const Vec3 rel = point - src.center_m;
  const Vec3 radial = rel - rel.dot(src.direction) * src.direction;
  const double r = radial.norm();
  if (r <= 1e-15) throw_invalid("field point lies on the wire axis");
  double mag = 0.0;
  if (r < src.radius_m) {
    mag = kMu0 * src.current_a * r / (2.0 * kPi * src.radius_m * src.radius_m);
  } else {
    mag = kMu0 * src.current_a / (2.0 * kPi * r);
  }
  const Vec3 phi = src.direction.cross(radial / r);
  return FieldVector(mag * phi, Frame::Lab);
}

// Midpoint-rule Biot-Savart integral over a filament segment.
FieldVector finite_segment(const WireSource& src, const Vec3& point, const WireOptions& o) {
  if (!(o.segment_length_m > 0.0) || o.quadrature_points < 1)
    throw_invalid("finite wire: segment length and quadrature points must be positive");
  const Vec3 rel = point - src.center_m;
  const Vec3 radial = rel - rel.dot(src.direction) * src.direction;
  const double r = radial.norm();
  if (r <= 1e-15) throw_invalid("field point lies on the wire axis");

  const int n = o.quadrature_points;
  const double dl = o.segment_length_m / n;
  Vec3 acc = Vec3::Zero();
  for (int k = 0; k < n; ++k) {
    const double s = -0.5 * o.segment_length_m + (k + 0.5) * dl;
    const Vec3 d = rel - s * src.direction;
    const double dn = d.norm();
    acc += src.direction.cross(d) / (dn * dn * dn);
  }
  Vec3 b = kMu0 * src.current_a / (4.0 * kPi) * dl * acc;
  if (r < src.radius_m) b *= (r * r) / (src.radius_m * src.radius_m);
  return FieldVector(b, Frame::Lab);
}

}  // namespace

FieldVector wire_field(const WireSource& src, const Vec3& point_m, const WireOptions& options) {
  src.validate();
  if (!point_m.allFinite()) throw_invalid("field point must be finite");
  if (options.model == WireModel::FiniteSegment) return finite_segment(src, point_m, options);
  return infinite_wire(src, point_m);
}

Vec3 probe_point(const WireSource& src, double standoff_m, double depth_m) {
  if (!(standoff_m > std::abs(depth_m))) throw_invalid("probe: standoff must exceed depth");
  return src.center_m + Vec3(0.0, -std::sqrt(standoff_m * standoff_m - depth_m * depth_m), -depth_m);
}

FieldVector superpose(std::span<const FieldVector> fields) {
  if (fields.empty()) throw_invalid("superpose: no fields");
  FieldVector sum = FieldVector::zero(fields.front().frame());
  for (const auto& f : fields) sum = sum + f;
  return sum;
}

void GridSpec::validate() const {
  if (ny < 2 || nz < 2) throw_invalid("grid needs at least 2 nodes per axis");
  if (!(y_max_m > y_min_m) || !(z_max_m > z_min_m)) throw_invalid("grid must be strictly increasing");
  if (!std::isfinite(y_min_m + y_max_m + z_min_m + z_max_m + x_m)) throw_invalid("grid must be finite");
}

namespace {
std::vector<double> axis_nodes(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}
}  // namespace

std::vector<double> GridSpec::ys() const { return axis_nodes(y_min_m, y_max_m, ny); }
std::vector<double> GridSpec::zs() const { return axis_nodes(z_min_m, z_max_m, nz); }

FieldMap field_map(const WireSource& src, const GridSpec& grid, const WireOptions& options,
                   unsigned jobs) {
  src.validate();
  grid.validate();
  const auto ys = grid.ys();
  const auto zs = grid.zs();
  FieldMap out;
  out.grid = grid;
  out.vectors.assign(grid.ny * grid.nz, FieldVector::zero(Frame::Lab));

  const std::size_t total = out.vectors.size();
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (std::size_t k = next++; k < total && !failed; k = next++) {
      try {
        const Vec3 p(grid.x_m, ys[k % grid.ny], zs[k / grid.ny]);
        const Vec3 rel = p - src.center_m;
        // The interior solution vanishes on the axis; a filament has no limit there.
        if (src.radius_m > 0.0 && (rel - rel.dot(src.direction) * src.direction).norm() <= 1e-15)
          continue;
        out.vectors[k] = wire_field(src, p, options);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, 64));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

FootprintStats footprint_field(const WireSource& src, const Vec3& center_m, double radius_m,
                               const WireOptions& options, int rings, int spokes) {
  if (!(radius_m > 0.0) || rings < 1 || spokes < 3) throw_invalid("footprint: bad sampling");
  // Area-weighted samples in the plane normal to the wire.
  const Vec3 e1 = src.direction.unitOrthogonal();
  const Vec3 e2 = src.direction.cross(e1);
  double wsum = 0.0, m1 = 0.0, m2 = 0.0;
  FootprintStats s;
  s.min_t = HUGE_VAL;
  s.max_t = 0.0;
  for (int i = 0; i < rings; ++i) {
    const double rho = radius_m * (i + 0.5) / rings;
    for (int j = 0; j < spokes; ++j) {
      const double a = 2.0 * kPi * j / spokes;
      const Vec3 p = center_m + rho * (std::cos(a) * e1 + std::sin(a) * e2);
      const double b = wire_field(src, p, options).norm();
      m1 += rho * b;
      m2 += rho * b * b;
      wsum += rho;
      s.min_t = std::min(s.min_t, b);
      s.max_t = std::max(s.max_t, b);
    }
  }
  s.mean_t = m1 / wsum;
  s.stddev_t = std::sqrt(std::max(0.0, m2 / wsum - s.mean_t * s.mean_t));
  return s;
}

}  // namespace nvmag
