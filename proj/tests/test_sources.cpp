#include <catch_amalgamated.hpp>

#include "nvmag/inversion.hpp"
#include "nvmag/sources.hpp"
#include "oracles.hpp"

using namespace nvmag;
using Catch::Approx;

namespace {

WireSource wire(double current_a, double radius_m = 10e-6) {
  WireSource w;
  w.radius_m = radius_m;
  w.current_a = current_a;
  return w;
}

// mu0 I / (2 pi r) evaluated by hand.
double closed_form(double current_a, double r_m) { return 2e-7 * current_a / r_m; }

}  // namespace

TEST_CASE("wire field at the probe standoff") {
  const Vec3 p(0.0, 0.0, -27e-6);
  const auto one = wire_field(wire(1e-3), p);
  CHECK(one.frame() == Frame::Lab);
  CHECK(one.norm() == Approx(7.41e-6).epsilon(0.01));
  CHECK(one.norm() == Approx(closed_form(1e-3, 27e-6)).epsilon(1e-12));
  CHECK(std::abs(one.by()) == Approx(one.norm()).epsilon(1e-12));

  CHECK(wire_field(wire(0.03), p).norm() == Approx(0.222e-3).epsilon(0.005));
  CHECK(wire_field(wire(0.0), p).norm() == 0.0);
}

TEST_CASE("right-hand rule") {
  // Current along +x, point at -y: field along -z.
  const auto b = wire_field(wire(0.01), Vec3(0.0, -30e-6, 0.0));
  CHECK(b.bz() < 0.0);
  CHECK(std::abs(b.bx()) < 1e-18);
  CHECK(std::abs(b.by()) < 1e-18);
  const auto p = probe_point(wire(0.01), 27e-6, 0.0);
  CHECK(wire_field(wire(0.01), p).bz() < 0.0);
}

TEST_CASE("exterior field falls as 1/r and stays azimuthal") {
  const auto w = wire(0.02);
  for (const Vec3 dir : {Vec3(0, 1, 0), Vec3(0, 0.6, -0.8), Vec3(0.3, -0.4, 0.5)}) {
    Vec3 radial = dir - dir.dot(w.direction) * w.direction;
    radial.normalize();
    for (double r : {12e-6, 27e-6, 80e-6}) {
      const Vec3 p = 5e-6 * w.direction + r * radial;
      const auto b1 = wire_field(w, p);
      const auto b2 = wire_field(w, w.center_m + 5e-6 * w.direction + 2.0 * r * radial);
      CHECK(b2.norm() == Approx(0.5 * b1.norm()).epsilon(1e-12));
      CHECK(std::abs(b1.tesla().dot(w.direction)) <= 1e-12 * b1.norm());
      CHECK(std::abs(b1.tesla().dot(radial)) <= 1e-12 * b1.norm());
    }
  }
}

TEST_CASE("interior solution is continuous at the conductor surface") {
  const auto w = wire(0.05, 10e-6);
  const Vec3 dir(0.0, 1.0, 0.0);
  const double r = w.radius_m;
  const auto inside = wire_field(w, r * (1.0 - 1e-15) * dir);
  const auto at = wire_field(w, r * dir);
  CHECK(inside.norm() == Approx(at.norm()).epsilon(1e-12));
  CHECK(at.norm() == Approx(closed_form(0.05, r)).epsilon(1e-12));
  // Linear inside.
  CHECK(wire_field(w, 0.5 * r * dir).norm() == Approx(0.5 * at.norm()).epsilon(1e-12));
}

TEST_CASE("wire_field rejects points on the axis") {
  const auto w = wire(0.01);
  try {
    wire_field(w, Vec3(3e-6, 0.0, 0.0));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidArgument);
  }
  WireSource bad = w;
  bad.direction = Vec3(1.0, 1.0, 0.0);
  CHECK_THROWS_AS(wire_field(bad, Vec3(0, 1e-5, 0)), Error);
  bad = w;
  bad.radius_m = -1.0;
  CHECK_THROWS_AS(wire_field(bad, Vec3(0, 1e-5, 0)), Error);
}

TEST_CASE("finite segment approaches the infinite wire") {
  const auto w = wire(0.03);
  WireOptions seg;
  seg.model = WireModel::FiniteSegment;
  seg.segment_length_m = 2e-3;
  const Vec3 p(0.0, -27e-6, 0.0);
  const auto inf = wire_field(w, p);
  const auto fin = wire_field(w, p, seg);
  CHECK((fin.tesla() - inf.tesla()).norm() < 1e-3 * inf.norm());

  seg.segment_length_m = 54e-6;
  const auto short_seg = wire_field(w, p, seg);
  // Finite segment of half-length L/2 at distance r: sin of the half-angle.
  const double half = 27e-6;
  const double expected = inf.norm() * half / std::hypot(half, 27e-6);
  CHECK(short_seg.norm() == Approx(expected).epsilon(1e-4));
}

TEST_CASE("field map node values and symmetry") {
  GridSpec grid;
  grid.y_min_m = -27e-6;
  grid.y_max_m = 27e-6;
  grid.z_min_m = -27e-6;
  grid.z_max_m = 27e-6;
  grid.ny = 7;
  grid.nz = 7;
  const auto w = wire(1e-3);
  const auto map = field_map(w, grid);
  REQUIRE(map.vectors.size() == grid.ny * grid.nz);
  const auto ys = grid.ys();
  const auto zs = grid.zs();

  // Node (y = 0, z = -27 um).
  const auto& b = map.vectors[0 * grid.ny + 3];
  REQUIRE(ys[3] == Approx(0.0).margin(1e-18));
  REQUIRE(zs[0] == Approx(-27e-6));
  CHECK(b.norm() == Approx(7.41e-6).epsilon(0.01));
  CHECK(std::abs(b.by()) == Approx(b.norm()).epsilon(1e-12));

  // On-axis node of a finite-radius wire is zero.
  CHECK(map.vectors[3 * grid.ny + 3].norm() == 0.0);

  for (std::size_t iz = 0; iz < grid.nz; ++iz) {
    for (std::size_t iy = 0; iy < grid.ny; ++iy) {
      const auto& a = map.vectors[iz * grid.ny + iy];
      const auto& m = map.vectors[iz * grid.ny + (grid.ny - 1 - iy)];
      CHECK(a.norm() == Approx(m.norm()).epsilon(1e-12));
      // Field along (0, -z, y): reflecting y keeps by and flips bz.
      CHECK(a.by() == Approx(m.by()).margin(1e-18));
      CHECK(a.bz() == Approx(-m.bz()).margin(1e-18));
    }
  }
}

TEST_CASE("field map is linear in the current and independent of jobs") {
  GridSpec grid;
  grid.ny = 21;
  grid.nz = 17;
  const auto a = field_map(wire(0.01), grid, {}, 1);
  const auto b = field_map(wire(0.02), grid, {}, 1);
  const auto c = field_map(wire(0.01), grid, {}, 3);
  for (std::size_t k = 0; k < a.vectors.size(); ++k) {
    CHECK(b.vectors[k].tesla() == 2.0 * a.vectors[k].tesla());
    CHECK(c.vectors[k].tesla() == a.vectors[k].tesla());
  }
}

TEST_CASE("grid validation") {
  GridSpec g;
  g.ny = 1;
  CHECK_THROWS_AS(field_map(wire(0.01), g), Error);
  g = GridSpec{};
  g.y_max_m = g.y_min_m;
  CHECK_THROWS_AS(field_map(wire(0.01), g), Error);
  const auto filament = wire(0.01, 0.0);
  CHECK_THROWS_AS(field_map(filament, GridSpec{}), Error);
}

TEST_CASE("superpose") {
  const FieldVector bias(1e-3, 2e-3, -9e-3, Frame::Lab);
  const std::array<FieldVector, 2> with_zero = {bias, FieldVector::zero(Frame::Lab)};
  CHECK(superpose(with_zero).tesla() == bias.tesla());
  const std::array<FieldVector, 2> cancel = {bias, -bias};
  CHECK(superpose(cancel).norm() == 0.0);
  const std::array<FieldVector, 2> mixed = {bias, FieldVector::zero(Frame::Crystal)};
  CHECK_THROWS_AS(superpose(mixed), Error);
  CHECK_THROWS_AS(superpose(std::span<const FieldVector>{}), Error);
}

TEST_CASE("bias plus wire reproduces the projection changes") {
  const auto g = nv_axes_for_facet("(110)");
  const SpinParams sp;
  constexpr double t0[3][2] = {{10.15, 25.4}, {9.75, 74.36}, {9.95, 85.61}};
  constexpr double t30[3][2] = {{10.18, 24.6}, {10.03, 75.69}, {10.26, 86.15}};
  std::vector<AxisMeasurement> m;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto b = field_at_polar_angle(g.axes[i], t0[i][0] * 1e-3, t0[i][1], 45.0);
    m.push_back({i, {resonance_frequencies(b, g.axes[i], sp), 0.0, 0.0, false}});
  }
  const auto bias = crystal_to_lab(reconstruct_vector(m, g, sp).b_crystal, g);
  const auto w = wire(0.03);
  const std::array<FieldVector, 2> parts = {bias, wire_field(w, probe_point(w, 27e-6, 0.0))};
  const auto total = superpose(parts);

  for (int i = 0; i < 3; ++i) {
    const Vec3& n = g.axes[i];
    const double predicted = std::abs(total.tesla().dot(n)) - std::abs(bias.tesla().dot(n));
    const double table = t30[i][0] * 1e-3 * std::abs(std::cos(deg2rad(t30[i][1]))) -
                         t0[i][0] * 1e-3 * std::abs(std::cos(deg2rad(t0[i][1])));
    CHECK(std::abs(predicted - table) < 0.15e-3);
  }

  // The superposed field survives the forward model and inversion.
  const auto crystal = lab_to_crystal(total, g);
  std::vector<AxisMeasurement> m30;
  for (std::size_t i = 0; i < 3; ++i)
    m30.push_back({i, {resonance_frequencies(crystal, g.axes[i], sp), 0.0, 0.0, false}});
  const auto back = reconstruct_vector(m30, g, sp);
  CHECK(back.magnitude_t == Approx(total.norm()).epsilon(0.02));
  CHECK(oracle::angle_deg(back.b_crystal.tesla(), crystal.tesla()) < 2.0);
}

TEST_CASE("footprint statistics") {
  const auto w = wire(0.03);
  const Vec3 c = probe_point(w, 27e-6, 0.0);
  const double radius = std::sqrt(456e-12 / oracle::kPi);
  const auto s = footprint_field(w, c, radius);
  CHECK(s.min_t <= s.mean_t);
  CHECK(s.mean_t <= s.max_t);
  CHECK(s.stddev_t > 0.0);
  CHECK(s.mean_t == Approx(0.222e-3).epsilon(0.1));
  const auto tiny = footprint_field(w, c, 1e-9);
  CHECK(tiny.mean_t == Approx(wire_field(w, c).norm()).epsilon(1e-4));
}
