#include "nvmag/spin_model.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <random>
#include <sstream>

namespace nvmag {

namespace {

using Mat3c = Eigen::Matrix3cd;

struct SpinMatrices {
  Mat3c sx, sy, sz;
};

const SpinMatrices& spin_one() {
  static const SpinMatrices m = [] {
    using C = std::complex<double>;
    const double r = 1.0 / std::sqrt(2.0);
    const C i(0.0, 1.0);
    SpinMatrices s;
    s.sx << 0, r, 0, r, 0, r, 0, r, 0;
    s.sy << C(0), -i * r, C(0), i * r, C(0), -i * r, C(0), i * r, C(0);
    s.sz << 1, 0, 0, 0, 0, 0, 0, 0, -1;
    return s;
  }();
  return m;
}

void require_unit(const Vec3& axis) {
  if (!axis.allFinite() || std::abs(axis.norm() - 1.0) > 1e-9)
    throw_invalid("NV axis must be a unit vector");
}

void require_increasing(std::span<const double> grid, std::size_t min_points) {
  if (grid.size() < min_points) {
    std::ostringstream os;
    os << "frequency grid needs at least " << min_points << " points, got " << grid.size();
    throw_invalid(os.str());
  }
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1]) || !std::isfinite(grid[i]))
      throw_invalid("frequency grid must be strictly increasing (index " + std::to_string(i) + ")");
  }
}

}  // namespace

void LineShapeParams::validate() const {
  if (!(fwhm_hz > 0.0)) throw_invalid("line shape: fwhm_hz must be > 0");
  if (!(contrast > 0.0 && contrast < 1.0)) throw_invalid("line shape: contrast must be in (0, 1)");
  if (!(baseline_counts_per_s > 0.0)) throw_invalid("line shape: baseline_counts_per_s must be > 0");
  for (double w : axis_weights)
    if (!(w >= 0.0) || !std::isfinite(w)) throw_invalid("line shape: axis weights must be >= 0");
}

void CoherenceParams::validate() const {
  if (!(t2_star_s > 0.0)) throw_invalid("coherence: t2_star_s must be > 0");
  if (!(rabi_freq_hz > 0.0)) throw_invalid("coherence: rabi_freq_hz must be > 0");
  if (!(rabi_decay_s > 0.0)) throw_invalid("coherence: rabi_decay_s must be > 0");
  if (!(rabi_contrast > 0.0 && rabi_contrast < 1.0))
    throw_invalid("coherence: rabi_contrast must be in (0, 1)");
}

void OdmrSpectrum::validate(std::size_t min_points) const {
  if (freqs_hz.size() != signal.size())
    throw_invalid("spectrum: freqs_hz and signal lengths differ");
  if (!counts_per_s.empty() && counts_per_s.size() != freqs_hz.size())
    throw_invalid("spectrum: counts_per_s length differs from freqs_hz");
  require_increasing(freqs_hz, min_points);
  for (double s : signal)
    if (!std::isfinite(s)) throw_invalid("spectrum: non-finite signal value");
}

CrystalGeometry nv_axes_for_facet(std::string_view facet) {
  if (facet != "(110)") {
    throw_invalid("unsupported facet '" + std::string(facet) + "'; only (110) is supported");
  }
  const double a = 1.0 / std::sqrt(3.0);
  const double b = std::sqrt(2.0 / 3.0);
  CrystalGeometry g;
  g.facet = "(110)";
  g.facet_normal = Vec3::UnitZ();
  // Cubic [111]-family vectors rotated so that [-110]/sqrt2 -> x, [001] -> y
  // and [110]/sqrt2 -> z. The set keeps the tetrahedral sign convention, so
  // every pair of axes makes 109.47 degrees.
  g.axes = {Vec3(0.0, a, -b), Vec3(-b, -a, 0.0), Vec3(b, -a, 0.0), Vec3(0.0, a, b)};
  g.labels = {AxisLabel::OutOfPlaneInward, AxisLabel::InPlane, AxisLabel::InPlane,
              AxisLabel::OutOfPlaneOutward};
  return g;
}

Vec3 transverse_reference(const Vec3& axis) {
  Eigen::Index k = 0;
  axis.cwiseAbs().minCoeff(&k);
  Vec3 e = Vec3::Unit(k);
  Vec3 t = e - axis.dot(e) * axis;
  return t.normalized();
}

FieldVector field_at_polar_angle(const Vec3& axis, double magnitude_t, double theta_deg,
                                 double azimuth_deg) {
  require_unit(axis);
  const Vec3 tx = transverse_reference(axis);
  const Vec3 ty = axis.cross(tx);
  const double th = deg2rad(theta_deg);
  const double ph = deg2rad(azimuth_deg);
  Vec3 dir = std::cos(th) * axis + std::sin(th) * (std::cos(ph) * tx + std::sin(ph) * ty);
  return FieldVector(magnitude_t * dir, Frame::Crystal);
}

std::array<double, 3> hamiltonian_eigenvalues(const FieldVector& b, const Vec3& axis,
                                              const SpinParams& params) {
  require_frame(b, Frame::Crystal, "resonance_frequencies");
  require_unit(axis);
  params.validate();

  const Vec3 tx = transverse_reference(axis);
  const Vec3 ty = axis.cross(tx);
  const double g = params.gamma_hz_per_t;
  const double bx = g * b.tesla().dot(tx);
  const double by = g * b.tesla().dot(ty);
  const double bz = g * b.tesla().dot(axis);

  const auto& s = spin_one();
  Mat3c h = params.d_hz * (s.sz * s.sz) + params.e_hz * (s.sx * s.sx - s.sy * s.sy) +
            bx * s.sx + by * s.sy + bz * s.sz;
  Eigen::SelfAdjointEigenSolver<Mat3c> solver(h, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw_numerical("Hamiltonian diagonalization failed");
  const auto& w = solver.eigenvalues();
  return {w(0), w(1), w(2)};
}

ResonancePair resonance_frequencies(const FieldVector& b, const Vec3& axis,
                                    const SpinParams& params) {
  const auto w = hamiltonian_eigenvalues(b, axis, params);
  return ResonancePair(w[1] - w[0], w[2] - w[0]);
}

std::vector<double> linear_grid(double start_hz, double stop_hz, std::size_t points) {
  if (points < 2) throw_invalid("scan grid needs at least 2 points");
  if (!(stop_hz > start_hz)) throw_invalid("scan grid: stop must exceed start");
  std::vector<double> grid(points);
  const double step = (stop_hz - start_hz) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) grid[i] = start_hz + step * static_cast<double>(i);
  grid.back() = stop_hz;
  return grid;
}

double lorentzian(double f, double center, double fwhm) {
  const double x = 2.0 * (f - center) / fwhm;
  return 1.0 / (1.0 + x * x);
}

std::vector<double> apply_poisson(std::span<const double> normalized, double baseline_counts,
                                  std::uint64_t seed, std::vector<double>* counts) {
  if (!(baseline_counts > 0.0)) throw_invalid("Poisson noise: baseline counts must be > 0");
  std::mt19937_64 rng(seed);
  std::vector<double> out(normalized.size());
  if (counts) counts->resize(normalized.size());
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    const double mean = std::max(0.0, baseline_counts * normalized[i]);
    std::poisson_distribution<long long> dist(mean);
    const double n = mean > 0.0 ? static_cast<double>(dist(rng)) : 0.0;
    if (counts) (*counts)[i] = n;
    out[i] = n / baseline_counts;
  }
  return out;
}

OdmrSpectrum odmr_spectrum(const FieldVector& b, const CrystalGeometry& geom,
                           const SpinParams& params, const LineShapeParams& line,
                           std::span<const double> scan, std::optional<PoissonNoise> noise) {
  line.validate();
  require_increasing(scan, 2);

  std::vector<std::pair<double, double>> lines;  // center, depth
  for (std::size_t i = 0; i < geom.axes.size(); ++i) {
    const double w = line.axis_weights[i];
    if (w == 0.0) continue;
    const ResonancePair p = resonance_frequencies(b, geom.axes[i], params);
    lines.emplace_back(p.nu1_hz, w * line.contrast);
    lines.emplace_back(p.nu2_hz, w * line.contrast);
  }

  OdmrSpectrum spec;
  spec.freqs_hz.assign(scan.begin(), scan.end());
  spec.signal.resize(scan.size());
  for (std::size_t i = 0; i < scan.size(); ++i) {
    double dip = 0.0;
    for (const auto& [c, depth] : lines) dip += depth * lorentzian(scan[i], c, line.fwhm_hz);
    spec.signal[i] = 1.0 - dip;
  }
  if (noise) {
    spec.signal = apply_poisson(spec.signal, line.baseline_counts_per_s, noise->seed,
                                &spec.counts_per_s);
  } else {
    spec.counts_per_s.resize(scan.size());
    for (std::size_t i = 0; i < scan.size(); ++i)
      spec.counts_per_s[i] = line.baseline_counts_per_s * spec.signal[i];
  }
  return spec;
}

double rabi_signal(double t_s, const CoherenceParams& coh) {
  if (!(t_s >= 0.0)) throw_invalid("rabi_signal: time must be >= 0");
  const double osc = 1.0 - std::cos(2.0 * kPi * coh.rabi_freq_hz * t_s);
  const double decay = std::isinf(coh.rabi_decay_s) ? 1.0 : std::exp(-t_s / coh.rabi_decay_s);
  return 1.0 - 0.5 * coh.rabi_contrast * osc * decay;
}

double ramsey_signal(double t_s, double detuning_hz, const CoherenceParams& coh,
                     RamseyEnvelope envelope) {
  if (!(t_s >= 0.0)) throw_invalid("ramsey_signal: time must be >= 0");
  const double x = t_s / coh.t2_star_s;
  const double env = envelope == RamseyEnvelope::Gaussian ? std::exp(-x * x) : std::exp(-x);
  return 1.0 - 0.5 * coh.rabi_contrast * (1.0 - std::cos(2.0 * kPi * detuning_hz * t_s) * env);
}

}  // namespace nvmag
