#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "nvmag/spectral_fit.hpp"

using namespace nvmag;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

struct Line {
  double center;
  double fwhm;
  double depth;
};

// Synthetic spectrum built here rather than with the library simulator.
OdmrSpectrum synth(const std::vector<Line>& lines, double f0, double f1, std::size_t n,
                   double baseline_counts = 0.0, std::uint64_t seed = 0) {
  OdmrSpectrum s;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double f = f0 + (f1 - f0) * static_cast<double>(i) / static_cast<double>(n - 1);
    double v = 1.0;
    for (const auto& l : lines) {
      const double x = 2.0 * (f - l.center) / l.fwhm;
      v -= l.depth / (1.0 + x * x);
    }
    s.freqs_hz.push_back(f);
    if (baseline_counts > 0.0) {
      std::poisson_distribution<long long> pd(baseline_counts * v);
      const double c = static_cast<double>(pd(rng));
      s.counts_per_s.push_back(c);
      s.signal.push_back(c / baseline_counts);
    } else {
      s.signal.push_back(v);
    }
  }
  return s;
}

constexpr double kD = 2.872e9;
constexpr double kE = 8.15e6;
constexpr double kW = 5.27e6;

}  // namespace

TEST_CASE("detect_dips finds two dips 148 MHz apart") {
  const auto s = synth({{kD - 74e6, kW, 0.02}, {kD + 74e6, kW, 0.02}}, 2.7e9, 3.05e9, 3501);
  const auto c = detect_dips(s, 0.005, kW);
  REQUIRE(c.size() == 2);
  const double step = 1e5;
  CHECK_THAT(c[0], WithinAbs(kD - 74e6, step));
  CHECK_THAT(c[1], WithinAbs(kD + 74e6, step));
}

TEST_CASE("detect_dips on a flat spectrum is empty") {
  const auto s = synth({}, 2.7e9, 3.05e9, 1001);
  CHECK(detect_dips(s, 0.005, kW).empty());
  OdmrSpectrum empty;
  CHECK_THROWS_AS(detect_dips(empty, 0.005, kW), Error);
}

TEST_CASE("detect_dips resolves six dips at 3 fwhm spacing") {
  std::vector<Line> lines;
  for (int k = 0; k < 6; ++k) lines.push_back({2.80e9 + k * 3.5 * kW, kW, 0.02});
  const auto s = synth(lines, 2.75e9, 3.0e9, 2501);
  const auto c = detect_dips(s, 0.005, 0.0);
  REQUIRE(c.size() == 6);
  for (int k = 0; k < 6; ++k) CHECK_THAT(c[k], WithinAbs(lines[k].center, 1e5));
}

TEST_CASE("two-dip Poisson fit recovers centers and contrast") {
  const std::vector<Line> truth = {{2.80e9, kW, 0.02}, {2.95e9, kW, 0.02}};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto s = synth(truth, 2.7e9, 3.05e9, 1401, 1e5, seed);
    const auto rep = fit_lorentzians(s, 2);
    REQUIRE(rep.dips.size() == 2);
    CHECK(rep.converged);
    CHECK_FALSE(rep.degenerate);
    for (int k = 0; k < 2; ++k) {
      CHECK(std::abs(rep.dips[k].center_hz - truth[k].center) < 0.1 * kW);
      CHECK_THAT(rep.dips[k].contrast, WithinRel(truth[k].depth, 0.10));
      CHECK(rep.dips[k].fwhm_hz > 0.0);
      CHECK(rep.dips[k].center_sigma_hz > 0.0);
      CHECK(rep.dips[k].fwhm_sigma_hz >= 0.0);
      CHECK(rep.dips[k].contrast_sigma >= 0.0);
    }
  }
}

TEST_CASE("perfect single Lorentzian is a fixed point") {
  const double c0 = 2.9e9;
  const auto s = synth({{c0, kW, 0.03}}, 2.85e9, 2.95e9, 1001);
  const std::vector<double> init = {c0};
  FitOptions opt;
  opt.initial_fwhm_hz = kW;
  const auto rep = fit_lorentzians(s, 1, init, opt);
  REQUIRE(rep.dips.size() == 1);
  CHECK(rep.converged);
  CHECK_THAT(rep.dips[0].center_hz, WithinRel(c0, 1e-8));
  CHECK_THAT(rep.dips[0].fwhm_hz, WithinRel(kW, 1e-8));
  CHECK_THAT(rep.dips[0].contrast, WithinRel(0.03, 1e-8));
  CHECK_THAT(rep.baseline, WithinRel(1.0, 1e-8));
}

TEST_CASE("zero-field fit splits by 2E") {
  const auto s = synth({{kD - kE, kW, 0.02}, {kD + kE, kW, 0.02}}, 2.82e9, 2.92e9, 1001, 1e5, 4);
  const auto rep = fit_lorentzians(s, 2);
  REQUIRE(rep.dips.size() == 2);
  CHECK_THAT(rep.dips[1].center_hz - rep.dips[0].center_hz, WithinAbs(16.3e6, 0.2e6));
}

TEST_CASE("asking for more dips than resolvable flags a degenerate fit") {
  const auto s = synth({{2.9e9, kW, 0.03}}, 2.85e9, 2.95e9, 1001);
  const auto rep = fit_lorentzians(s, 2);
  CHECK(rep.degenerate);
}

TEST_CASE("iteration cap yields a flagged best-so-far result") {
  const auto s = synth({{2.80e9, kW, 0.02}, {2.95e9, kW, 0.02}}, 2.7e9, 3.05e9, 1401, 1e5, 3);
  FitOptions opt;
  opt.lm.max_iterations = 1;
  const auto rep = fit_lorentzians(s, 2, {}, opt);
  CHECK_FALSE(rep.converged);
  CHECK_THAT(rep.message, Catch::Matchers::ContainsSubstring("did not converge"));
  CHECK(rep.dips.size() == 2);
}

TEST_CASE("fit input validation") {
  const auto s = synth({{2.9e9, kW, 0.03}}, 2.85e9, 2.95e9, 101);
  CHECK_THROWS_AS(fit_lorentzians(s, 0), Error);
  const std::vector<double> wrong = {2.9e9, 2.91e9};
  CHECK_THROWS_AS(fit_lorentzians(s, 1, wrong), Error);
}

TEST_CASE("refitting a converged solution keeps the cost") {
  const auto s = synth({{2.80e9, kW, 0.02}, {2.86e9, kW, 0.015}}, 2.7e9, 3.0e9, 1201, 1e5, 8);
  const auto first = fit_lorentzians(s, 2);
  REQUIRE(first.converged);
  const auto second = refit_lorentzians(s, first);
  CHECK(std::abs(second.cost - first.cost) / first.cost < 1e-12);
  for (std::size_t k = 0; k < 2; ++k)
    CHECK(std::abs(second.dips[k].center_hz - first.dips[k].center_hz) <
          1e-3 * first.dips[k].center_sigma_hz);
}

TEST_CASE("noise-free fits are exact for well separated dips") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Line> lines;
    double c = 2.62e9 + 40e6 * u(rng);
    const int n = 2 + 2 * (trial % 3);
    for (int k = 0; k < n; ++k) {
      lines.push_back({c, kW * (0.8 + 0.4 * u(rng)), 0.01 + 0.02 * u(rng)});
      c += (3.5 + 10.0 * u(rng)) * kW;
    }
    const auto s = synth(lines, 2.55e9, c + 40e6, 4001);
    const auto rep = fit_lorentzians(s, n);
    REQUIRE(rep.dips.size() == static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k)
      CHECK(std::abs(rep.dips[k].center_hz - lines[k].center) < 1e-6 * kW);
  }
}

TEST_CASE("center 1-sigma intervals have roughly Gaussian coverage") {
  const std::vector<Line> truth = {{2.84e9, kW, 0.02}, {2.90e9, kW, 0.02}};
  int covered = 0, total = 0;
  for (std::uint64_t seed = 100; seed < 300; ++seed) {
    const auto s = synth(truth, 2.78e9, 2.96e9, 721, 1e5, seed);
    const auto rep = fit_lorentzians(s, 2);
    REQUIRE(rep.dips.size() == 2);
    for (int k = 0; k < 2; ++k) {
      ++total;
      if (std::abs(rep.dips[k].center_hz - truth[k].center) <= rep.dips[k].center_sigma_hz) ++covered;
    }
  }
  const double frac = static_cast<double>(covered) / total;
  INFO("coverage " << frac);
  CHECK(frac >= 0.60);
  CHECK(frac <= 0.75);
}

TEST_CASE("fit_many does not depend on thread count") {
  std::vector<OdmrSpectrum> specs;
  for (std::uint64_t seed = 1; seed <= 6; ++seed)
    specs.push_back(synth({{2.80e9, kW, 0.02}, {2.95e9, kW, 0.02}}, 2.7e9, 3.05e9, 701, 1e5, seed));
  const auto a = fit_many(specs, 2, {}, 1);
  const auto b = fit_many(specs, 2, {}, 3);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].cost == b[i].cost);
    for (std::size_t k = 0; k < a[i].dips.size(); ++k)
      CHECK(a[i].dips[k].center_hz == b[i].dips[k].center_hz);
  }
}

TEST_CASE("pair_dips pairs outermost first") {
  const std::vector<double> six = {2.60e9, 2.75e9, 2.84e9, 2.90e9, 2.99e9, 3.15e9};
  const auto p = pair_dips(six, kD);
  REQUIRE(p.pairs.size() == 3);
  CHECK(p.pairs[0].pair.nu1_hz == 2.60e9);
  CHECK(p.pairs[0].pair.nu2_hz == 3.15e9);
  CHECK(p.pairs[2].pair.nu1_hz == 2.84e9);
  CHECK_FALSE(p.warning);

  const std::vector<double> two = {2.80e9, 2.95e9};
  CHECK(pair_dips(two, kD).pairs.size() == 1);

  const std::vector<double> lopsided = {2.80e9, 3.05e9};
  const auto w = pair_dips(lopsided, kD);
  CHECK(w.warning);
  CHECK(w.pairs[0].asymmetric);

  const std::vector<double> odd = {2.8e9, 2.9e9, 3.0e9};
  CHECK_THROWS_AS(pair_dips(odd, kD), Error);
}

TEST_CASE("pair splittings follow axial projections") {
  // Weak fields keep the transverse shift small; ordering then follows |B.n|.
  const auto g = nv_axes_for_facet("(110)");
  const SpinParams sp;
  std::mt19937_64 rng(41);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> mag(2e-3, 8e-3);
  for (int trial = 0; trial < 50; ++trial) {
    const FieldVector b(mag(rng) * Vec3(n(rng), n(rng), n(rng)).normalized(), Frame::Crystal);
    std::vector<std::pair<double, double>> proj;  // |B.n|, splitting
    std::vector<double> centers;
    for (const auto& a : g.axes) {
      const auto p = resonance_frequencies(b, a, sp);
      proj.push_back({std::abs(b.tesla().dot(a)), p.splitting_hz()});
      centers.push_back(p.nu1_hz);
      centers.push_back(p.nu2_hz);
    }
    std::sort(centers.begin(), centers.end());
    std::sort(proj.begin(), proj.end(), [](auto& x, auto& y) { return x.first > y.first; });
    bool close = false;
    for (std::size_t i = 1; i < proj.size(); ++i)
      close = close || proj[i - 1].first - proj[i].first < 0.2e-3;
    if (close) continue;
    const auto pairs = pair_dips(centers, sp.d_hz).pairs;
    for (std::size_t i = 0; i < pairs.size(); ++i)
      CHECK_THAT(pairs[i].pair.splitting_hz(), WithinRel(proj[i].second, 1e-9));
  }
}

namespace {

std::vector<DipoleSample> lobes(double a1, double th1, double a2, double th2, double offset = 0.0) {
  std::vector<DipoleSample> s;
  for (double ang = 0.0; ang < 360.0; ang += 15.0) {
    const double c1 = std::cos(deg2rad(ang - th1));
    const double c2 = std::cos(deg2rad(ang - th2));
    s.push_back({ang, offset + a1 * c1 * c1 + a2 * c2 * c2});
  }
  return s;
}

double axis_distance(double a, double b) {
  const double d = std::fmod(std::abs(a - b), 180.0);
  return std::min(d, 180.0 - d);
}

}  // namespace

TEST_CASE("single-lobe pattern is an in-plane dipole") {
  const auto p = fit_dipole_pattern(lobes(0.02, 33.0, 0.0, 0.0));
  CHECK(p.classification == DipoleClass::SingleDipole);
  CHECK(p.in_plane());
  REQUIRE(p.lobes.size() == 1);
  CHECK(axis_distance(p.lobes[0].axis_deg, 33.0) < 2.0);
  CHECK_FALSE(p.unpolarized);
}

TEST_CASE("two unequal lobes are a double dipole") {
  const auto p = fit_dipole_pattern(lobes(0.02, 20.0, 0.012, 120.0));
  CHECK(p.classification == DipoleClass::DoubleDipole);
  CHECK_FALSE(p.in_plane());
  REQUIRE(p.lobes.size() == 2);
}

TEST_CASE("orthogonal equal lobes against a zero background are a double dipole") {
  const auto p = fit_dipole_pattern(lobes(0.015, 0.0, 0.015, 90.0));
  CHECK(p.classification == DipoleClass::DoubleDipole);
}

TEST_CASE("constant contrast over its own background is unpolarized") {
  std::vector<DipoleSample> flat;
  for (double ang = 0.0; ang < 360.0; ang += 20.0) flat.push_back({ang, 0.015});
  DipoleFitOptions opt;
  opt.background = 0.015;
  const auto p = fit_dipole_pattern(flat, opt);
  CHECK(p.classification == DipoleClass::SingleDipole);
  CHECK(p.single_fit.amplitude < 1e-9);
  CHECK(p.unpolarized);
}

TEST_CASE("dipole fits need angular coverage") {
  std::vector<DipoleSample> narrow;
  for (double ang = 0.0; ang <= 90.0; ang += 10.0) narrow.push_back({ang, 0.01});
  CHECK_THROWS_AS(fit_dipole_pattern(narrow), Error);
  std::vector<DipoleSample> few = {{0, 0.01}, {90, 0.0}, {180, 0.01}};
  CHECK_THROWS_AS(fit_dipole_pattern(few), Error);
}

TEST_CASE("Rabi and Ramsey fits recover noiseless parameters") {
  const CoherenceParams coh;
  std::vector<double> t;
  for (int i = 0; i < 400; ++i) t.push_back(i * 2.5e-9);
  const auto rabi = fit_rabi(rabi_trace(t, coh));
  CHECK(rabi.converged);
  CHECK_THAT(rabi.freq_hz.value, WithinRel(coh.rabi_freq_hz, 1e-6));
  CHECK_THAT(rabi.decay_s.value, WithinRel(coh.rabi_decay_s, 1e-6));
  CHECK_THAT(rabi.contrast.value, WithinRel(coh.rabi_contrast, 1e-6));

  std::vector<double> tr;
  for (int i = 0; i < 300; ++i) tr.push_back(i * 0.5e-9);
  const auto ramsey = fit_ramsey(ramsey_trace(tr, 30e6, coh, RamseyEnvelope::Gaussian));
  CHECK(ramsey.converged);
  CHECK_THAT(ramsey.t2_star_s.value, WithinRel(coh.t2_star_s, 1e-6));
  CHECK_THAT(ramsey.detuning_hz.value, WithinRel(30e6, 1e-6));
}

TEST_CASE("noisy Ramsey trace gives T2* within 10%") {
  const CoherenceParams coh;
  std::vector<double> t;
  for (int i = 0; i < 300; ++i) t.push_back(i * 0.5e-9);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto fit = fit_ramsey(ramsey_trace(t, 30e6, coh, RamseyEnvelope::Gaussian, PoissonNoise{seed}));
    CHECK_THAT(fit.t2_star_s.value, WithinRel(60.4e-9, 0.10));
  }
}
