#include "nvmag/spectral_fit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <numeric>
#include <sstream>
#include <thread>

namespace nvmag {

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), mid));
  }
  return m;
}

double median_step(const std::vector<double>& grid) {
  std::vector<double> d(grid.size() - 1);
  for (std::size_t i = 1; i < grid.size(); ++i) d[i - 1] = grid[i] - grid[i - 1];
  return median_of(std::move(d));
}

std::vector<double> boxcar(const std::vector<double>& s, std::size_t half_width) {
  if (half_width == 0) return s;
  const std::size_t n = s.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half_width ? i - half_width : 0;
    const std::size_t hi = std::min(n - 1, i + half_width);
    double acc = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) acc += s[k];
    out[i] = acc / static_cast<double>(hi - lo + 1);
  }
  return out;
}

std::size_t smoothing_half_width(double separation_hz, double step_hz) {
  if (!(separation_hz > 0.0)) return 0;
  const double w = std::floor(separation_hz / (2.0 * step_hz));
  return static_cast<std::size_t>(std::clamp(w, 0.0, 10.0));
}

// Full width at half depth around the deepest point of the smoothed signal.
double estimate_fwhm(const OdmrSpectrum& spec) {
  const double step = median_step(spec.freqs_hz);
  const std::vector<double> s = boxcar(spec.signal, 1);
  const double base = median_of(s);
  const auto it = std::min_element(s.begin(), s.end());
  const std::size_t k = static_cast<std::size_t>(it - s.begin());
  const double half = base - 0.5 * (base - *it);
  std::size_t lo = k, hi = k;
  while (lo > 0 && s[lo] < half) --lo;
  while (hi + 1 < s.size() && s[hi] < half) ++hi;
  const double span = spec.freqs_hz.back() - spec.freqs_hz.front();
  const double w = spec.freqs_hz[hi] - spec.freqs_hz[lo];
  return std::clamp(w, 3.0 * step, span / 10.0);
}

// p = [baseline, (c, t, s) per dip] with fwhm = w_min + exp(t) and
// amplitude exp(s); model = baseline - sum a_k L_k. The log scales keep dips
// from collapsing onto single noise points or turning into peaks. With a
// shared width: p = [baseline, t, (c, s) per dip].
struct LorentzianModel {
  const std::vector<double>* freqs = nullptr;
  const std::vector<double>* signal = nullptr;
  std::vector<double> weights;  // empty: uniform
  std::size_t n_dips = 0;
  double w_min = 0.0;
  bool shared = false;

  Eigen::Index size() const {
    return static_cast<Eigen::Index>(shared ? 2 + 2 * n_dips : 1 + 3 * n_dips);
  }
  Eigen::Index ic(std::size_t k) const {
    return static_cast<Eigen::Index>(shared ? 2 + 2 * k : 1 + 3 * k);
  }
  Eigen::Index it(std::size_t k) const { return shared ? 1 : ic(k) + 1; }
  Eigen::Index is(std::size_t k) const { return shared ? ic(k) + 1 : ic(k) + 2; }

  double weight(std::size_t i) const { return weights.empty() ? 1.0 : weights[i]; }
  double center(const Eigen::VectorXd& p, std::size_t k) const { return p(ic(k)); }
  double fwhm(const Eigen::VectorXd& p, std::size_t k) const { return w_min + std::exp(p(it(k))); }
  double amplitude(const Eigen::VectorXd& p, std::size_t k) const { return std::exp(p(is(k))); }

  void residual(const Eigen::VectorXd& p, Eigen::VectorXd& r) const {
    const auto& f = *freqs;
    r.resize(static_cast<Eigen::Index>(f.size()));
    for (std::size_t i = 0; i < f.size(); ++i) {
      double m = p(0);
      for (std::size_t k = 0; k < n_dips; ++k)
        m -= amplitude(p, k) * lorentzian(f[i], center(p, k), fwhm(p, k));
      r(static_cast<Eigen::Index>(i)) = weight(i) * (m - (*signal)[i]);
    }
  }

  void jacobian(const Eigen::VectorXd& p, Eigen::MatrixXd& jac) const {
    const auto& f = *freqs;
    jac.setZero(static_cast<Eigen::Index>(f.size()), p.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const double wt = weight(i);
      jac(row, 0) = wt;
      for (std::size_t k = 0; k < n_dips; ++k) {
        const double c = center(p, k), w = fwhm(p, k), a = amplitude(p, k);
        const double x = 2.0 * (f[i] - c) / w;
        const double l = 1.0 / (1.0 + x * x);
        jac(row, ic(k)) = -wt * a * 4.0 * x * l * l / w;
        jac(row, it(k)) += -wt * a * 2.0 * x * x * l * l / w * (w - w_min);
        jac(row, is(k)) = -wt * a * l;
      }
    }
  }
};

}  // namespace

std::vector<double> detect_dips(const OdmrSpectrum& spec, double min_prominence,
                                double min_separation_hz) {
  if (spec.size() == 0) throw_invalid("detect_dips: empty spectrum");
  if (!(min_prominence > 0.0 && min_prominence < 1.0))
    throw_invalid("detect_dips: min_prominence must be in (0, 1)");
  spec.validate(3);

  const std::size_t n = spec.size();
  const double step = median_step(spec.freqs_hz);
  const std::vector<double> s = boxcar(spec.signal, smoothing_half_width(min_separation_hz, step));

  // Local baseline: median over a window spanning half the scan.
  const std::size_t half_window = std::max<std::size_t>(10, n / 4);
  std::vector<double> window;
  struct Candidate {
    double freq;
    double depth;
  };
  std::vector<Candidate> found;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(s[i] <= s[i - 1] && s[i] < s[i + 1])) continue;
    const std::size_t lo = i >= half_window ? i - half_window : 0;
    const std::size_t hi = std::min(n - 1, i + half_window);
    window.assign(s.begin() + static_cast<std::ptrdiff_t>(lo),
                  s.begin() + static_cast<std::ptrdiff_t>(hi + 1));
    const double depth = median_of(window) - s[i];
    if (depth >= min_prominence) found.push_back({spec.freqs_hz[i], depth});
  }

  std::stable_sort(found.begin(), found.end(),
                   [](const Candidate& a, const Candidate& b) { return a.depth > b.depth; });
  std::vector<double> accepted;
  for (const Candidate& c : found) {
    const bool clash = std::any_of(accepted.begin(), accepted.end(), [&](double a) {
      return std::abs(a - c.freq) < min_separation_hz;
    });
    if (!clash) accepted.push_back(c.freq);
  }
  std::sort(accepted.begin(), accepted.end());
  return accepted;
}

namespace {

struct Seed {
  double center;
  double fwhm;
  double amplitude;
};

struct FitSetup {
  const OdmrSpectrum* spec;
  const FitOptions* options;
  std::vector<double> weights;
  double base0;
  double w_min;
};

FitSetup make_setup(const OdmrSpectrum& spec, const FitOptions& options) {
  // Narrower than two grid steps is not resolvable.
  FitSetup setup{&spec, &options, {}, median_of(spec.signal), 2.0 * median_step(spec.freqs_hz)};
  if (options.shot_noise_weights) {
    if (spec.counts_per_s.empty())
      throw_invalid("fit_lorentzians: shot-noise weights need counts_per_s");
    // signal = counts / scale, so sigma_signal = sqrt(counts) / scale.
    setup.weights.resize(spec.size());
    for (std::size_t i = 0; i < spec.size(); ++i) {
      const double scale = spec.signal[i] != 0.0 ? spec.counts_per_s[i] / spec.signal[i] : 0.0;
      const double sigma = scale > 0.0 ? std::sqrt(std::max(spec.counts_per_s[i], 1.0)) / scale : 1.0;
      setup.weights[i] = 1.0 / sigma;
    }
  }
  return setup;
}

double depth_at(const OdmrSpectrum& spec, double base, double f) {
  const auto it = std::lower_bound(spec.freqs_hz.begin(), spec.freqs_hz.end(), f);
  const auto idx = std::min(static_cast<std::size_t>(it - spec.freqs_hz.begin()), spec.size() - 1);
  return std::max(base - spec.signal[idx], 1e-3);
}

LmResult run_fit(const FitSetup& setup, std::vector<Seed> seeds, LorentzianModel& model) {
  std::sort(seeds.begin(), seeds.end(),
            [](const Seed& a, const Seed& b) { return a.center < b.center; });
  const std::size_t nd = seeds.size();
  model = LorentzianModel{&setup.spec->freqs_hz, &setup.spec->signal, setup.weights, nd,
                          setup.w_min, setup.options->shared_fwhm};

  auto log_width = [&](double w) { return std::log(std::max(w - setup.w_min, 1e-3 * w)); };
  Eigen::VectorXd p0(model.size()), scale(model.size());
  p0(0) = setup.base0;
  scale(0) = 1.0;
  double mean_w = 0.0;
  for (const Seed& sd : seeds) mean_w += sd.fwhm / static_cast<double>(nd);
  for (std::size_t k = 0; k < nd; ++k) {
    p0(model.ic(k)) = seeds[k].center;
    p0(model.it(k)) = log_width(model.shared ? mean_w : seeds[k].fwhm);
    p0(model.is(k)) = std::log(std::max(seeds[k].amplitude, 1e-4));
    scale(model.ic(k)) = seeds[k].fwhm;
    scale(model.it(k)) = 1.0;
    scale(model.is(k)) = 1.0;
  }

  const LorentzianModel* m = &model;
  LevenbergMarquardt lm([m](const Eigen::VectorXd& p, Eigen::VectorXd& r) { m->residual(p, r); },
                        static_cast<Eigen::Index>(setup.spec->size()), setup.options->lm);
  lm.set_parameter_scale(scale);
  if (setup.options->analytic_jacobian) {
    lm.set_jacobian([m](const Eigen::VectorXd& p, Eigen::MatrixXd& j) { m->jacobian(p, j); });
  }
  return lm.minimize(p0);
}

FitReport make_report(const FitSetup& setup, const LmResult& res, const LorentzianModel& model);

// Seeds for the missing dips taken by splitting the widest dips of a fit
// with only the detected ones; merged neighbours fit as one broad dip.
std::vector<Seed> split_seeds(const FitSetup& setup, const std::vector<double>& detected,
                              std::size_t nd, double fwhm0) {
  std::vector<Seed> seeds;
  for (double c : detected) seeds.push_back({c, fwhm0, depth_at(*setup.spec, setup.base0, c)});
  LorentzianModel model{};
  const LmResult pre = run_fit(setup, seeds, model);
  seeds.clear();
  for (std::size_t k = 0; k < detected.size(); ++k) {
    seeds.push_back({model.center(pre.params, k),
                     std::clamp(model.fwhm(pre.params, k), 0.5 * fwhm0, 4.0 * fwhm0),
                     model.amplitude(pre.params, k)});
  }
  while (seeds.size() < nd) {
    auto widest = std::max_element(seeds.begin(), seeds.end(),
                                   [](const Seed& a, const Seed& b) { return a.fwhm < b.fwhm; });
    const Seed w = *widest;
    const double half = std::max(0.5 * (w.fwhm - fwhm0), 0.25 * fwhm0);
    const double child = std::max(w.fwhm - 2.0 * half, 0.5 * fwhm0);
    *widest = {w.center - half, child, 0.6 * w.amplitude};
    seeds.push_back({w.center + half, child, 0.6 * w.amplitude});
  }
  return seeds;
}

std::vector<Seed> decode(const LmResult& res, const LorentzianModel& model) {
  std::vector<Seed> out;
  for (std::size_t k = 0; k < model.n_dips; ++k)
    out.push_back({model.center(res.params, k), model.fwhm(res.params, k),
                   model.amplitude(res.params, k)});
  return out;
}

// Moves dead dips (off-scan or negligible) onto the largest live dips, which
// are then split in two; keeps a move only if it lowers the cost.
void refine_dead_dips(const FitSetup& setup, LmResult& res, LorentzianModel& model) {
  const auto& f = setup.spec->freqs_hz;
  for (std::size_t round = 0; round < model.n_dips; ++round) {
    std::vector<Seed> seeds = decode(res, model);
    std::vector<double> amps, fwhms;
    for (const Seed& sd : seeds) {
      amps.push_back(sd.amplitude);
      fwhms.push_back(sd.fwhm);
    }
    const double amp_ref = median_of(amps);
    const double fwhm_ref = median_of(fwhms);
    auto dead = [&](const Seed& sd) {
      return sd.center < f.front() || sd.center > f.back() || sd.amplitude < 0.25 * amp_ref ||
             sd.fwhm < 0.5 * fwhm_ref;
    };
    const auto d = std::find_if(seeds.begin(), seeds.end(), dead);
    if (d == seeds.end()) return;
    const std::size_t di = static_cast<std::size_t>(d - seeds.begin());

    std::vector<std::size_t> live;
    for (std::size_t k = 0; k < seeds.size(); ++k)
      if (!dead(seeds[k])) live.push_back(k);
    std::stable_sort(live.begin(), live.end(), [&](std::size_t a, std::size_t b) {
      return seeds[a].amplitude * seeds[a].fwhm > seeds[b].amplitude * seeds[b].fwhm;
    });
    if (live.size() > 4) live.resize(4);

    std::vector<double> widths;
    for (std::size_t k : live) widths.push_back(seeds[k].fwhm);
    const double w_ref = median_of(widths);

    bool improved = false;
    LmResult best = res;
    LorentzianModel best_model = model;
    for (std::size_t j : live) {
      std::vector<Seed> trial = seeds;
      const Seed w = seeds[j];
      const double half = std::max(0.5 * (w.fwhm - w_ref), 0.25 * w_ref);
      trial[j] = {w.center - half, w_ref, 0.5 * w.amplitude};
      trial[di] = {w.center + half, w_ref, 0.5 * w.amplitude};
      LorentzianModel m{};
      LmResult r = run_fit(setup, trial, m);
      if (r.cost < best.cost) {
        best = std::move(r);
        best_model = m;
        improved = true;
      }
    }
    if (!improved) return;
    res = std::move(best);
    model = best_model;
  }
}

}  // namespace

FitReport fit_lorentzians(const OdmrSpectrum& spec, int n_dips,
                          std::span<const double> init_centers, const FitOptions& options) {
  spec.validate();
  if (n_dips < 1) throw_invalid("fit_lorentzians: n_dips must be >= 1");
  const auto nd = static_cast<std::size_t>(n_dips);
  if (!init_centers.empty() && init_centers.size() != nd)
    throw_invalid("fit_lorentzians: init length must equal n_dips");

  const double fwhm0 = options.initial_fwhm_hz > 0.0 ? options.initial_fwhm_hz : estimate_fwhm(spec);
  const FitSetup setup = make_setup(spec, options);

  auto seeds_for = [&](const std::vector<double>& centers) {
    std::vector<Seed> seeds;
    for (double c : centers) seeds.push_back({c, fwhm0, depth_at(spec, setup.base0, c)});
    return seeds;
  };

  std::vector<double> detected;
  std::vector<double> centers;
  if (!init_centers.empty()) {
    centers.assign(init_centers.begin(), init_centers.end());
  } else {
    const double sep = options.min_separation_hz > 0.0 ? options.min_separation_hz : fwhm0;
    detected = detect_dips(spec, options.min_prominence, sep);
    if (detected.size() > nd) {
      // Keep the deepest candidates.
      std::vector<std::pair<double, double>> by_depth;
      for (double c : detected) by_depth.emplace_back(-depth_at(spec, setup.base0, c), c);
      std::stable_sort(by_depth.begin(), by_depth.end());
      detected.clear();
      for (std::size_t k = 0; k < nd; ++k) detected.push_back(by_depth[k].second);
      std::sort(detected.begin(), detected.end());
    }
    centers = detected;
    const std::size_t missing = nd - centers.size();
    const double f0 = spec.freqs_hz.front();
    const double span = spec.freqs_hz.back() - f0;
    for (std::size_t k = 0; k < missing; ++k)
      centers.push_back(f0 + span * static_cast<double>(k + 1) / static_cast<double>(missing + 1));
  }

  LorentzianModel model{};
  LmResult res = run_fit(setup, seeds_for(centers), model);
  if (init_centers.empty() && !detected.empty() && detected.size() < nd) {
    LorentzianModel alt_model{};
    const LmResult alt = run_fit(setup, split_seeds(setup, detected, nd, fwhm0), alt_model);
    if (alt.cost < res.cost) {
      res = alt;
      model = alt_model;
    }
  }
  if (init_centers.empty()) refine_dead_dips(setup, res, model);
  return make_report(setup, res, model);
}

FitReport refit_lorentzians(const OdmrSpectrum& spec, const FitReport& start,
                            const FitOptions& options) {
  spec.validate();
  if (start.dips.empty()) throw_invalid("refit_lorentzians: start has no dips");
  FitSetup setup = make_setup(spec, options);
  setup.base0 = start.baseline;
  std::vector<Seed> seeds;
  for (const DipFit& d : start.dips) {
    if (!(d.fwhm_hz > setup.w_min) || !(d.contrast > 0.0))
      throw_invalid("refit_lorentzians: start dips need contrast > 0 and a resolvable width");
    seeds.push_back({d.center_hz, d.fwhm_hz, d.contrast * start.baseline});
  }
  LorentzianModel model{};
  const LmResult res = run_fit(setup, seeds, model);
  return make_report(setup, res, model);
}

namespace {

FitReport make_report(const FitSetup& setup, const LmResult& res, const LorentzianModel& model) {
  const OdmrSpectrum& spec = *setup.spec;
  const FitOptions& options = *setup.options;
  const std::size_t nd = model.n_dips;
  FitReport rep;
  rep.baseline = res.params(0);
  rep.baseline_sigma = res.sigma(0);
  rep.cost = res.cost;
  rep.iterations = res.iterations;
  rep.converged = res.converged;
  rep.message = res.converged ? "converged: " + res.message : "did not converge: " + res.message;

  const double b = rep.baseline;
  std::vector<DipFit> dips(nd);
  for (std::size_t k = 0; k < nd; ++k) {
    DipFit& d = dips[k];
    d.center_hz = model.center(res.params, k);
    d.center_sigma_hz = res.sigma(model.ic(k));
    const double ew = std::exp(res.params(model.it(k)));
    d.fwhm_hz = model.w_min + ew;
    d.fwhm_sigma_hz = ew * res.sigma(model.it(k));
    const double a = model.amplitude(res.params, k);
    d.contrast = a / b;
    if (res.covariance.size() != 0) {
      // Delta method through a = exp(s).
      const Eigen::Index j = model.is(k);
      const double va = a * a * res.covariance(j, j);
      const double vb = res.covariance(0, 0);
      const double cab = a * res.covariance(j, 0);
      const double var = va / (b * b) + a * a * vb / (b * b * b * b) - 2.0 * a * cab / (b * b * b);
      d.contrast_sigma = std::sqrt(std::max(0.0, var));
    }
  }

  // Attribute each point's squared residual to the nearest dip.
  Eigen::VectorXd r;
  model.residual(res.params, r);
  for (std::size_t i = 0; i < spec.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < nd; ++k) {
      if (std::abs(spec.freqs_hz[i] - dips[k].center_hz) <
          std::abs(spec.freqs_hz[i] - dips[best].center_hz))
        best = k;
    }
    dips[best].cost_contribution += r(static_cast<Eigen::Index>(i)) * r(static_cast<Eigen::Index>(i));
  }

  std::stable_sort(dips.begin(), dips.end(),
                   [](const DipFit& x, const DipFit& y) { return x.center_hz < y.center_hz; });
  for (std::size_t k = 0; k < nd; ++k) {
    if (!(dips[k].contrast > 0.0)) {
      rep.degenerate = true;
      rep.message += "; dip " + std::to_string(k) + " has non-positive contrast";
    }
    if (k + 1 < nd) {
      const double w = std::max(dips[k].fwhm_hz, dips[k + 1].fwhm_hz);
      if (dips[k + 1].center_hz - dips[k].center_hz < options.degenerate_fraction * w) {
        rep.degenerate = true;
        rep.message += "; dips " + std::to_string(k) + " and " + std::to_string(k + 1) +
                       " are unresolved";
      }
    }
  }
  rep.dips = std::move(dips);
  return rep;
}

}  // namespace

std::vector<FitReport> fit_many(std::span<const OdmrSpectrum> spectra, int n_dips,
                                const FitOptions& options, unsigned jobs) {
  std::vector<FitReport> out(spectra.size());
  std::vector<std::exception_ptr> errors(spectra.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < spectra.size(); i = next++) {
      try {
        out[i] = fit_lorentzians(spectra[i], n_dips, {}, options);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(spectra.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

DipPairing pair_dips(std::span<const double> sorted_centers_hz, double d_hz,
                     double symmetry_tolerance_hz) {
  std::vector<DipFit> dips(sorted_centers_hz.size());
  for (std::size_t i = 0; i < dips.size(); ++i) dips[i].center_hz = sorted_centers_hz[i];
  return pair_dips(dips, d_hz, symmetry_tolerance_hz);
}

DipPairing pair_dips(std::span<const DipFit> dips, double d_hz, double symmetry_tolerance_hz) {
  if (dips.size() % 2 != 0) throw_invalid("pair_dips: odd number of dip centers");
  for (std::size_t i = 1; i < dips.size(); ++i)
    if (dips[i].center_hz < dips[i - 1].center_hz)
      throw_invalid("pair_dips: centers must be sorted ascending");

  DipPairing out;
  const std::size_t n = dips.size();
  for (std::size_t k = 0; k < n / 2; ++k) {
    const DipFit& lo = dips[k];
    const DipFit& hi = dips[n - 1 - k];
    PairedDips p;
    p.pair = ResonancePair(lo.center_hz, hi.center_hz);
    p.nu1_sigma_hz = lo.center_sigma_hz;
    p.nu2_sigma_hz = hi.center_sigma_hz;
    p.asymmetric = std::abs(p.pair.center_hz() - d_hz) > symmetry_tolerance_hz;
    if (p.asymmetric) {
      out.warning = true;
      std::ostringstream os;
      os << "pair " << k << " midpoint is " << (p.pair.center_hz() - d_hz) / 1e6
         << " MHz from D; ";
      out.message += os.str();
    }
    out.pairs.push_back(p);
  }
  std::stable_sort(out.pairs.begin(), out.pairs.end(), [](const PairedDips& a, const PairedDips& b) {
    return a.pair.splitting_hz() > b.pair.splitting_hz();
  });
  return out;
}

// ---------------------------------------------------------------------------
// Dipole patterns

const char* to_string(DipoleClass c) {
  return c == DipoleClass::SingleDipole ? "single_dipole" : "double_dipole";
}

double dipole_model(double angle_deg, double offset, std::span<const DipoleLobe> lobes) {
  double c = offset;
  for (const DipoleLobe& l : lobes) {
    const double x = std::cos(deg2rad(angle_deg - l.axis_deg));
    c += l.amplitude * x * x;
  }
  return c;
}

namespace {

double wrap180(double deg) {
  double d = std::fmod(deg, 180.0);
  if (d < 0.0) d += 180.0;
  return d;
}

// Lobe amplitudes enter as squares to keep them non-negative.
std::vector<DipoleLobe> lobes_from(const Eigen::VectorXd& p) {
  std::vector<DipoleLobe> lobes;
  for (Eigen::Index i = 0; i + 1 < p.size(); i += 2)
    lobes.push_back({p(i) * p(i), wrap180(rad2deg(p(i + 1)))});
  return lobes;
}

struct LobeFit {
  std::vector<DipoleLobe> lobes;
  double rss = HUGE_VAL;
};

LobeFit fit_lobes(std::span<const DipoleSample> samples, double background, int n_lobes) {
  const auto m = static_cast<Eigen::Index>(samples.size());
  auto residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    r.resize(m);
    const auto lobes = lobes_from(p);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& s = samples[static_cast<std::size_t>(i)];
      r(i) = dipole_model(s.hwp_angle_deg, background, lobes) - s.contrast;
    }
  };
  double peak = 0.0;
  for (const auto& s : samples) peak = std::max(peak, s.contrast - background);
  const double a0 = std::sqrt(std::max(peak, 1e-6) / n_lobes);

  LmOptions opt;
  opt.max_iterations = 300;
  LevenbergMarquardt lm(residual, m, opt);
  Eigen::VectorXd scale(2 * n_lobes);
  for (int k = 0; k < n_lobes; ++k) {
    scale(2 * k) = a0;
    scale(2 * k + 1) = 1.0;
  }
  lm.set_parameter_scale(scale);

  LobeFit best;
  const double offsets2[] = {45.0, 90.0, 135.0};
  for (int s = 0; s < 6; ++s) {
    const double t1 = 30.0 * s;
    const int n_second = n_lobes == 2 ? 3 : 1;
    for (int j = 0; j < n_second; ++j) {
      Eigen::VectorXd p0(2 * n_lobes);
      p0(0) = a0;
      p0(1) = deg2rad(t1);
      if (n_lobes == 2) {
        p0(2) = a0;
        p0(3) = deg2rad(t1 + offsets2[j]);
      }
      const LmResult r = lm.minimize(p0);
      if (r.cost < best.rss) {
        best.rss = r.cost;
        best.lobes = lobes_from(r.params);
      }
    }
  }
  std::stable_sort(best.lobes.begin(), best.lobes.end(),
                   [](const DipoleLobe& a, const DipoleLobe& b) { return a.amplitude > b.amplitude; });
  return best;
}

}  // namespace

DipolePattern fit_dipole_pattern(std::span<const DipoleSample> samples,
                                 const DipoleFitOptions& options) {
  if (samples.size() < 8) throw_invalid("fit_dipole_pattern: need at least 8 angle samples");
  DipolePattern out;
  out.offset = options.background;
  for (const auto& s : samples) {
    if (!std::isfinite(s.hwp_angle_deg) || !std::isfinite(s.contrast))
      throw_invalid("fit_dipole_pattern: non-finite sample");
    double a = std::fmod(s.hwp_angle_deg, 360.0);
    if (a < 0.0) a += 360.0;
    out.samples.push_back({a, s.contrast});
  }

  std::vector<double> angles;
  for (const auto& s : out.samples) angles.push_back(s.hwp_angle_deg);
  std::sort(angles.begin(), angles.end());
  double largest_gap = 360.0 - angles.back() + angles.front();
  for (std::size_t i = 1; i < angles.size(); ++i)
    largest_gap = std::max(largest_gap, angles[i] - angles[i - 1]);
  if (360.0 - largest_gap < 180.0 - 1e-9)
    throw_invalid("fit_dipole_pattern: samples must span at least 180 degrees");

  const LobeFit one = fit_lobes(out.samples, options.background, 1);
  const LobeFit two = fit_lobes(out.samples, options.background, 2);
  out.single_fit = one.lobes.front();
  out.single_rss = one.rss;
  out.double_rss = two.rss;

  const bool gain = one.rss > 0.0 && (one.rss - two.rss) > options.residual_gain * one.rss;
  const bool second_lobe = two.lobes.size() == 2 &&
                           two.lobes[1].amplitude > options.amplitude_ratio * two.lobes[0].amplitude;
  if (gain && second_lobe) {
    out.classification = DipoleClass::DoubleDipole;
    out.lobes = two.lobes;
  } else {
    out.classification = DipoleClass::SingleDipole;
    out.lobes = one.lobes;
  }

  double peak = 0.0;
  for (const auto& s : out.samples) peak = std::max(peak, std::abs(s.contrast));
  out.unpolarized = out.classification == DipoleClass::SingleDipole &&
                    out.single_fit.amplitude <= options.unpolarized_fraction * peak;
  return out;
}

// ---------------------------------------------------------------------------
// Rabi / Ramsey

namespace {

void require_trace(const TimeTrace& trace) {
  if (trace.t_s.size() != trace.signal.size()) throw_invalid("time trace: length mismatch");
  if (trace.t_s.size() < 8) throw_invalid("time trace: need at least 8 samples");
  for (std::size_t i = 0; i < trace.t_s.size(); ++i) {
    if (!(trace.t_s[i] >= 0.0) || !std::isfinite(trace.signal[i]))
      throw_invalid("time trace: invalid sample " + std::to_string(i));
    if (i > 0 && !(trace.t_s[i] > trace.t_s[i - 1]))
      throw_invalid("time trace: times must be strictly increasing");
  }
}

// Frequency of the strongest periodogram peak, excluding DC.
double dominant_frequency(const TimeTrace& trace) {
  const double mean = std::accumulate(trace.signal.begin(), trace.signal.end(), 0.0) /
                      static_cast<double>(trace.signal.size());
  const double span = trace.t_s.back() - trace.t_s.front();
  const double dt = span / static_cast<double>(trace.t_s.size() - 1);
  const double f_lo = 1.0 / span;
  const double f_hi = 0.5 / dt;
  const int n_grid = 4000;
  double best_f = f_lo, best_p = -1.0;
  for (int k = 0; k <= n_grid; ++k) {
    const double f = f_lo + (f_hi - f_lo) * k / n_grid;
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t i = 0; i < trace.t_s.size(); ++i)
      acc += (trace.signal[i] - mean) * std::polar(1.0, -2.0 * kPi * f * trace.t_s[i]);
    const double pw = std::norm(acc);
    if (pw > best_p) {
      best_p = pw;
      best_f = f;
    }
  }
  return best_f;
}

template <typename Model>
LmResult fit_trace(const TimeTrace& trace, const Model& model, const Eigen::VectorXd& p0) {
  const auto m = static_cast<Eigen::Index>(trace.t_s.size());
  auto residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    r.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto k = static_cast<std::size_t>(i);
      r(i) = model(trace.t_s[k], p) - trace.signal[k];
    }
  };
  LevenbergMarquardt lm(residual, m);
  lm.set_parameter_scale(p0.cwiseAbs());
  return lm.minimize(p0);
}

}  // namespace

TimeTrace rabi_trace(std::span<const double> t_s, const CoherenceParams& coh,
                     std::optional<PoissonNoise> noise, double baseline_counts) {
  coh.validate();
  TimeTrace tr;
  tr.t_s.assign(t_s.begin(), t_s.end());
  for (double t : t_s) tr.signal.push_back(rabi_signal(t, coh));
  if (noise) tr.signal = apply_poisson(tr.signal, baseline_counts, noise->seed);
  return tr;
}

TimeTrace ramsey_trace(std::span<const double> t_s, double detuning_hz, const CoherenceParams& coh,
                       RamseyEnvelope envelope, std::optional<PoissonNoise> noise,
                       double baseline_counts) {
  coh.validate();
  TimeTrace tr;
  tr.t_s.assign(t_s.begin(), t_s.end());
  for (double t : t_s) tr.signal.push_back(ramsey_signal(t, detuning_hz, coh, envelope));
  if (noise) tr.signal = apply_poisson(tr.signal, baseline_counts, noise->seed);
  return tr;
}

RabiFit fit_rabi(const TimeTrace& trace) {
  require_trace(trace);
  const double span = trace.t_s.back() - trace.t_s.front();
  const double mean = std::accumulate(trace.signal.begin(), trace.signal.end(), 0.0) /
                      static_cast<double>(trace.signal.size());
  Eigen::VectorXd p0(3);
  p0 << dominant_frequency(trace), 0.5 * span, std::max(2.0 * (1.0 - mean), 1e-3);

  auto model = [](double t, const Eigen::VectorXd& p) {
    const double decay = std::exp(-t / std::abs(p(1)));
    return 1.0 - 0.5 * p(2) * (1.0 - std::cos(2.0 * kPi * p(0) * t)) * decay;
  };
  const LmResult r = fit_trace(trace, model, p0);
  RabiFit out;
  out.freq_hz = {r.params(0), r.sigma(0)};
  out.decay_s = {std::abs(r.params(1)), r.sigma(1)};
  out.contrast = {r.params(2), r.sigma(2)};
  out.cost = r.cost;
  out.converged = r.converged;
  return out;
}

RamseyFit fit_ramsey(const TimeTrace& trace, RamseyEnvelope envelope) {
  require_trace(trace);
  const double span = trace.t_s.back() - trace.t_s.front();
  const double mean = std::accumulate(trace.signal.begin(), trace.signal.end(), 0.0) /
                      static_cast<double>(trace.signal.size());
  Eigen::VectorXd p0(3);
  p0 << dominant_frequency(trace), 0.25 * span, std::max(2.0 * (1.0 - mean), 1e-3);

  const bool gaussian = envelope == RamseyEnvelope::Gaussian;
  auto model = [gaussian](double t, const Eigen::VectorXd& p) {
    const double x = t / std::abs(p(1));
    const double env = gaussian ? std::exp(-x * x) : std::exp(-x);
    return 1.0 - 0.5 * p(2) * (1.0 - std::cos(2.0 * kPi * p(0) * t) * env);
  };
  const LmResult r = fit_trace(trace, model, p0);
  RamseyFit out;
  out.detuning_hz = {std::abs(r.params(0)), r.sigma(0)};
  out.t2_star_s = {std::abs(r.params(1)), r.sigma(1)};
  out.contrast = {r.params(2), r.sigma(2)};
  out.cost = r.cost;
  out.converged = r.converged;
  return out;
}

}  // namespace nvmag
