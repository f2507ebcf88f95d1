#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>

namespace cli {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string prepare_out_dir(const std::optional<std::string>& flag, const std::string& configured) {
  const std::string dir = flag.value_or(configured);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Failure(4, "cannot create output directory " + dir + ": " + ec.message());
  return dir;
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void write_json(const std::string& path, const json& doc) { write_text_file(path, doc.dump(2) + "\n"); }

json vec_json(const double v[3]) { return json::array({v[0], v[1], v[2]}); }

json spin_json(const nvmag_spin_params& s) {
  return {{"d_hz", s.d_hz}, {"e_hz", s.e_hz}, {"gamma_hz_per_t", s.gamma_hz_per_t}};
}

// Independent seeds per file from one campaign seed.
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <class T, void (*Destroy)(T*)>
struct Deleter {
  void operator()(T* p) const { Destroy(p); }
};

using GeometryPtr = std::unique_ptr<nvmag_geometry, Deleter<nvmag_geometry, nvmag_geometry_destroy>>;
using SpectrumPtr = std::unique_ptr<nvmag_spectrum, Deleter<nvmag_spectrum, nvmag_spectrum_destroy>>;
using FitPtr = std::unique_ptr<nvmag_fit, Deleter<nvmag_fit, nvmag_fit_destroy>>;
using MapPtr = std::unique_ptr<nvmag_field_map, Deleter<nvmag_field_map, nvmag_field_map_destroy>>;

GeometryPtr make_geometry(const std::string& facet) {
  nvmag_geometry* g = nullptr;
  check(nvmag_geometry_create(facet.c_str(), &g));
  return GeometryPtr(g);
}

RunConfig config_or_default(const std::optional<std::string>& path) {
  return path ? load_config(*path) : default_config();
}

struct FieldCase {
  std::optional<double> current_a;
  double lab_t[3];
};

std::vector<FieldCase> field_cases(const RunConfig& cfg) {
  std::vector<FieldCase> out;
  if (!cfg.wire) {
    FieldCase c{std::nullopt, {cfg.bias_t[0], cfg.bias_t[1], cfg.bias_t[2]}};
    out.push_back(c);
    return out;
  }
  double point[3];
  check(nvmag_probe_point(&cfg.wire->wire, cfg.probe.standoff_m, cfg.probe.depth_m, point));
  for (double current : cfg.wire->currents_a) {
    nvmag_wire w = cfg.wire->wire;
    w.current_a = current;
    double b[3] = {0.0, 0.0, 0.0};
    if (current != 0.0) check(nvmag_wire_field(&w, &cfg.wire->options, point, b));
    FieldCase c{current, {cfg.bias_t[0] + b[0], cfg.bias_t[1] + b[1], cfg.bias_t[2] + b[2]}};
    out.push_back(c);
  }
  return out;
}

}  // namespace

int cmd_simulate(const SimulateArgs& args) {
  RunConfig cfg = load_config(args.config);
  if (args.seed) cfg.seed = *args.seed;
  const std::string dir = prepare_out_dir(args.out, cfg.out_dir);
  const GeometryPtr geom = make_geometry(cfg.facet);

  json entries = json::array();
  const auto cases = field_cases(cfg);
  for (std::size_t k = 0; k < cases.size(); ++k) {
    const FieldCase& c = cases[k];
    double crystal[3];
    check(nvmag_lab_to_crystal(geom.get(), c.lab_t,
                               cfg.reconstruction.options.polarization_reference_deg, crystal));
    const std::uint64_t file_seed = splitmix64(cfg.seed ^ (0x100000001b3ULL * (k + 1)));

    nvmag_spectrum* raw = nullptr;
    check(nvmag_spectrum_simulate(geom.get(), &cfg.spin, &cfg.line, crystal, cfg.scan.start_hz,
                                  cfg.scan.stop_hz, cfg.scan.points, cfg.noise ? 1 : 0, file_seed,
                                  &raw));
    const SpectrumPtr spec(raw);
    char name[32];
    std::snprintf(name, sizeof name, "spectrum_%03zu.csv", k);
    check(nvmag_spectrum_write_csv(spec.get(), join(dir, name).c_str()));

    const double mag = std::sqrt(crystal[0] * crystal[0] + crystal[1] * crystal[1] +
                                 crystal[2] * crystal[2]);
    json pairs = json::array();
    for (std::size_t i = 0; i < 4; ++i) {
      if (cfg.line.axis_weights[i] <= 0.0) continue;
      double axis[3];
      check(nvmag_geometry_axis(geom.get(), i, axis, nullptr));
      double nu1, nu2;
      check(nvmag_resonance_pair(&cfg.spin, crystal, axis, &nu1, &nu2));
      const double dot = crystal[0] * axis[0] + crystal[1] * axis[1] + crystal[2] * axis[2];
      const double theta = mag > 0.0 ? std::acos(std::clamp(dot / mag, -1.0, 1.0)) * 180.0 / kPi : 0.0;
      pairs.push_back({{"axis_index", i}, {"nu1_hz", nu1}, {"nu2_hz", nu2}, {"theta_deg", theta}});
    }
    json e = {{"file", name},
              {"seed", file_seed},
              {"b_lab_t", vec_json(c.lab_t)},
              {"b_crystal_t", vec_json(crystal)},
              {"magnitude_t", mag},
              {"pairs", pairs}};
    e["current_a"] = c.current_a ? json(*c.current_a) : json(nullptr);
    entries.push_back(e);
  }

  json manifest = {{"seed", cfg.seed},
                   {"noise", cfg.noise},
                   {"facet", cfg.facet},
                   {"spin", spin_json(cfg.spin)},
                   {"fwhm_hz", cfg.line.fwhm_hz},
                   {"contrast", cfg.line.contrast},
                   {"baseline_counts_per_s", cfg.line.baseline_counts_per_s},
                   {"axis_weights", cfg.line.axis_weights},
                   {"scan", {{"start_hz", cfg.scan.start_hz},
                             {"stop_hz", cfg.scan.stop_hz},
                             {"points", cfg.scan.points}}},
                   {"spectra", entries}};
  write_json(join(dir, "manifest.json"), manifest);
  std::printf("wrote %zu spectra to %s\n", cases.size(), dir.c_str());
  return 0;
}

int cmd_fit(const FitArgs& args) {
  if (args.inputs.empty()) invalid("fit: no spectrum files given");
  RunConfig cfg = config_or_default(args.config);
  int n_dips = args.n_dips.value_or(cfg.fit.n_dips);
  if (n_dips == 0 && args.config) n_dips = 2 * cfg.active_orientations();
  if (n_dips <= 0) invalid("fit: --n-dips is required without a config");
  if (n_dips % 2 != 0) invalid("fit: --n-dips must be even");
  const unsigned jobs = args.jobs.value_or(cfg.fit.jobs);
  if (jobs < 1) invalid("fit: --jobs must be at least 1");
  const std::string dir = prepare_out_dir(args.out, cfg.out_dir);

  std::vector<SpectrumPtr> owned;
  std::vector<const nvmag_spectrum*> spectra;
  for (const auto& path : args.inputs) {
    nvmag_spectrum* raw = nullptr;
    check(nvmag_spectrum_read_csv(path.c_str(), &raw));
    owned.emplace_back(raw);
    spectra.push_back(raw);
  }

  std::vector<nvmag_fit*> raw_fits(spectra.size(), nullptr);
  check(nvmag_fit_many(spectra.data(), spectra.size(), n_dips, &cfg.fit.options, jobs,
                       raw_fits.data()));
  std::vector<FitPtr> fits;
  for (auto* f : raw_fits) fits.emplace_back(f);

  json entries = json::array();
  std::size_t failed = 0;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    nvmag_fit_summary s;
    check(nvmag_fit_get_summary(fits[i].get(), &s));
    std::vector<nvmag_dip> dips(nvmag_fit_dip_count(fits[i].get()));
    json jd = json::array();
    for (std::size_t k = 0; k < dips.size(); ++k) {
      check(nvmag_fit_dip(fits[i].get(), k, &dips[k]));
      const auto& d = dips[k];
      jd.push_back({{"center_hz", d.center_hz},
                    {"center_sigma_hz", d.center_sigma_hz},
                    {"fwhm_hz", d.fwhm_hz},
                    {"fwhm_sigma_hz", d.fwhm_sigma_hz},
                    {"contrast", d.contrast},
                    {"contrast_sigma", d.contrast_sigma}});
    }
    std::vector<nvmag_pair> pairs(dips.size() / 2);
    int warning = 0;
    check(nvmag_pair_dips(dips.data(), dips.size(), cfg.spin.d_hz, pairs.data(), &warning));
    json jp = json::array();
    for (const auto& p : pairs) {
      jp.push_back({{"nu1_hz", p.nu1_hz},
                    {"nu2_hz", p.nu2_hz},
                    {"nu1_sigma_hz", p.nu1_sigma_hz},
                    {"nu2_sigma_hz", p.nu2_sigma_hz},
                    {"splitting_hz", p.nu2_hz - p.nu1_hz},
                    {"asymmetric", p.asymmetric != 0}});
    }
    if (!s.converged) ++failed;
    entries.push_back({{"file", args.inputs[i]},
                       {"converged", s.converged != 0},
                       {"degenerate", s.degenerate != 0},
                       {"iterations", s.iterations},
                       {"cost", s.cost},
                       {"baseline", s.baseline},
                       {"baseline_sigma", s.baseline_sigma},
                       {"message", nvmag_fit_message(fits[i].get())},
                       {"dips", jd},
                       {"pairs", jp},
                       {"pairing_warning", warning != 0}});
    std::printf("%s: %zu dips, %s\n", args.inputs[i].c_str(), dips.size(),
                s.converged ? "converged" : "NOT converged");
  }

  json report = {{"n_dips", n_dips}, {"d_hz", cfg.spin.d_hz}, {"spectra", entries}};
  write_json(join(dir, "fit_report.json"), report);
  if (failed > 0 && !args.allow_partial) {
    std::fprintf(stderr, "error: %zu of %zu fits did not converge\n", failed, fits.size());
    return 3;
  }
  return 0;
}

namespace {

struct MeasurementSet {
  std::string source;
  std::vector<nvmag_axis_measurement> measurements;
};

double number_field(const json& obj, const char* key, const std::string& where, bool required = true) {
  if (!obj.contains(key) || obj.at(key).is_null()) {
    if (required) invalid(where + ": missing " + key);
    return 0.0;
  }
  if (!obj.at(key).is_number()) invalid(where + ": " + key + " must be a number");
  return obj.at(key).get<double>();
}

nvmag_pair pair_from_json(const json& p, const std::string& where) {
  nvmag_pair out{};
  out.nu1_hz = number_field(p, "nu1_hz", where);
  out.nu2_hz = number_field(p, "nu2_hz", where);
  out.nu1_sigma_hz = number_field(p, "nu1_sigma_hz", where, false);
  out.nu2_sigma_hz = number_field(p, "nu2_sigma_hz", where, false);
  return out;
}

std::vector<MeasurementSet> load_measurements(const std::string& path, const ReconstructionConfig& rc) {
  const json doc = read_json_file(path);
  if (!doc.is_object()) invalid(path + ": expected a JSON object");
  std::vector<MeasurementSet> out;

  if (doc.contains("pairs") && !doc.contains("spectra")) {
    MeasurementSet set{path, {}};
    if (!doc.at("pairs").is_array()) invalid(path + ": pairs must be an array");
    for (const auto& p : doc.at("pairs")) {
      const std::string where = path + ": pair";
      if (!p.contains("axis_index") || !p.at("axis_index").is_number_unsigned())
        invalid(where + " needs an axis_index");
      nvmag_axis_measurement m{};
      m.axis_index = p.at("axis_index").get<std::size_t>();
      m.pair = pair_from_json(p, where);
      set.measurements.push_back(m);
    }
    out.push_back(set);
    return out;
  }

  if (!doc.contains("spectra") || !doc.at("spectra").is_array())
    invalid(path + ": neither a fit report nor a pairs document");
  if (rc.orientations.empty())
    invalid(path + ": fit reports need reconstruction.orientations in the config");
  for (const auto& entry : doc.at("spectra")) {
    const std::string source = entry.value("file", path);
    if (!entry.contains("pairs") || !entry.at("pairs").is_array())
      invalid(path + ": spectrum entry without pairs");
    const json& pairs = entry.at("pairs");
    if (pairs.size() != rc.orientations.size())
      invalid(source + ": " + std::to_string(pairs.size()) + " pairs but " +
              std::to_string(rc.orientations.size()) + " orientation entries");
    MeasurementSet set{source, {}};
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      if (!rc.orientations[k]) continue;
      nvmag_axis_measurement m{};
      m.axis_index = *rc.orientations[k];
      m.pair = pair_from_json(pairs[k], source);
      set.measurements.push_back(m);
    }
    out.push_back(set);
  }
  return out;
}

// E from a zero-field fit: half the splitting of its outermost dips.
double zero_field_e(const std::string& path) {
  const json doc = read_json_file(path);
  if (!doc.contains("spectra") || !doc.at("spectra").is_array() || doc.at("spectra").empty())
    invalid(path + ": zero-field report has no spectra");
  const json& dips = doc.at("spectra")[0].at("dips");
  if (!dips.is_array() || dips.size() < 2) invalid(path + ": zero-field report needs two dips");
  const double lo = number_field(dips.front(), "center_hz", path);
  const double hi = number_field(dips.back(), "center_hz", path);
  return 0.5 * (hi - lo);
}

json reconstruction_json(const std::string& source, const nvmag_reconstruction& r) {
  json axes = json::array();
  for (int i = 0; i < 3; ++i) {
    axes.push_back({{"axis_index", r.axis_indices[i]},
                    {"magnitude_t", r.axis_magnitude_t[i]},
                    {"magnitude_sigma_t", r.axis_magnitude_sigma_t[i]},
                    {"theta_deg", r.axis_theta_deg[i]},
                    {"theta_sigma_deg", r.axis_theta_sigma_deg[i]},
                    {"cone_axis", vec_json(r.cone_axis[i])},
                    {"cone_mirrored", r.cone_mirrored[i] != 0},
                    {"residual_t", r.residual_t[i]}});
  }
  json e = {{"source", source},
            {"b_crystal_t", vec_json(r.b_crystal_t)},
            {"b_lab_t", vec_json(r.b_lab_t)},
            {"b_sigma_t", vec_json(r.b_sigma_t)},
            {"magnitude_t", r.magnitude_t},
            {"magnitude_sigma_t", r.magnitude_sigma_t},
            {"direction_sigma_deg", r.direction_sigma_deg},
            {"triangle_diameter_deg", r.triangle_diameter_deg},
            {"low_confidence", r.low_confidence != 0},
            {"convention_overridden", r.convention_overridden != 0},
            {"axes", axes}};
  if (r.has_azimuth) {
    e["azimuth"] = {{"phi1_deg", r.phi1_deg},
                    {"phi2_deg", r.phi2_deg},
                    {"alternate_phi1_deg", r.alternate_phi1_deg},
                    {"alternate_phi2_deg", r.alternate_phi2_deg}};
  } else {
    e["azimuth"] = nullptr;
  }
  return e;
}

}  // namespace

int cmd_reconstruct(const ReconstructArgs& args) {
  if (args.inputs.empty()) invalid("reconstruct: no input reports given");
  RunConfig cfg = config_or_default(args.config);
  ReconstructionConfig& rc = cfg.reconstruction;
  if (args.hint) rc.options.hint = parse_hint(*args.hint);
  if (!rc.zero_field_report.empty()) cfg.spin.e_hz = zero_field_e(rc.zero_field_report);
  const std::string dir = prepare_out_dir(args.out, cfg.out_dir);
  const GeometryPtr geom = make_geometry(cfg.facet);

  std::vector<MeasurementSet> sets;
  for (const auto& path : args.inputs) {
    auto more = load_measurements(path, rc);
    sets.insert(sets.end(), more.begin(), more.end());
  }

  std::vector<nvmag_reconstruction> results(sets.size());
  json fields = json::array();
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& m = sets[i].measurements;
    const nvmag_status st =
        nvmag_reconstruct(geom.get(), &cfg.spin, m.data(), m.size(), &rc.options, &results[i]);
    if (st != NVMAG_OK) throw Failure(static_cast<int>(st), sets[i].source + ": " + nvmag_last_error());
    fields.push_back(reconstruction_json(sets[i].source, results[i]));
    std::printf("%s: |B| = %.6g T, triangle %.3g deg%s\n", sets[i].source.c_str(),
                results[i].magnitude_t, results[i].triangle_diameter_deg,
                results[i].low_confidence ? " (low confidence)" : "");
  }

  json diffs = json::array();
  for (std::size_t i = 1; i < results.size(); ++i) {
    double delta[3], mag, sigma;
    check(nvmag_vector_difference(&results[i], &results[0], delta, &mag, &sigma));
    diffs.push_back({{"source", sets[i].source},
                     {"reference", sets[0].source},
                     {"delta_t", vec_json(delta)},
                     {"magnitude_t", mag},
                     {"magnitude_sigma_t", sigma}});
    std::printf("%s - %s: |dB| = %.6g T\n", sets[i].source.c_str(), sets[0].source.c_str(), mag);
  }

  json report = {{"facet", cfg.facet},
                 {"spin", spin_json(cfg.spin)},
                 {"hint", rc.options.hint == NVMAG_HINT_AWAY ? "away" : "toward"},
                 {"polarization_reference_deg", rc.options.polarization_reference_deg},
                 {"fields", fields},
                 {"differences", diffs}};
  write_json(join(dir, "reconstruction_report.json"), report);
  return 0;
}

int cmd_wiremap(const WiremapArgs& args) {
  RunConfig cfg = load_config(args.config);
  if (!cfg.wire) invalid("wiremap: config has no sources.wire");
  if (!cfg.map) invalid("wiremap: config has no map section");
  const unsigned jobs = args.jobs.value_or(cfg.fit.jobs);
  if (jobs < 1) invalid("wiremap: --jobs must be at least 1");
  const std::string dir = prepare_out_dir(args.out, cfg.out_dir);

  double probe[3];
  check(nvmag_probe_point(&cfg.wire->wire, cfg.probe.standoff_m, cfg.probe.depth_m, probe));
  // Footprint of the Gaussian waveguide mode around the probe point.
  const double mode_radius_m = std::sqrt(456e-12 / kPi);

  json maps = json::array();
  for (std::size_t k = 0; k < cfg.wire->currents_a.size(); ++k) {
    nvmag_wire w = cfg.wire->wire;
    w.current_a = cfg.wire->currents_a[k];
    nvmag_field_map* raw = nullptr;
    check(nvmag_field_map_create(&w, &cfg.wire->options, &*cfg.map, jobs, &raw));
    const MapPtr map(raw);
    char name[32];
    std::snprintf(name, sizeof name, "field_map_%03zu.csv", k);
    check(nvmag_field_map_write_csv(map.get(), join(dir, name).c_str()));

    double b[3] = {0.0, 0.0, 0.0};
    double mean = 0.0, sd = 0.0, lo = 0.0, hi = 0.0;
    if (w.current_a != 0.0) {
      check(nvmag_wire_field(&w, &cfg.wire->options, probe, b));
      check(nvmag_footprint_field(&w, &cfg.wire->options, probe, mode_radius_m, &mean, &sd, &lo, &hi));
    }
    const double mag = std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
    maps.push_back({{"file", name},
                    {"current_a", w.current_a},
                    {"probe_b_t", vec_json(b)},
                    {"probe_magnitude_t", mag},
                    {"footprint", {{"radius_m", mode_radius_m},
                                   {"mean_t", mean},
                                   {"stddev_t", sd},
                                   {"min_t", lo},
                                   {"max_t", hi}}}});
    std::printf("%s: I = %.6g A, |B| at probe = %.6g T\n", name, w.current_a, mag);
  }
  json summary = {{"probe_point_m", vec_json(probe)},
                  {"nodes", cfg.map->ny * cfg.map->nz},
                  {"maps", maps}};
  write_json(join(dir, "wiremap.json"), summary);
  return 0;
}

int cmd_sensitivity(const SensitivityArgs& args) {
  RunConfig cfg = load_config(args.config);
  const SensitivityConfig& sc = cfg.sensitivity;
  const std::string dir = prepare_out_dir(args.out, cfg.out_dir);

  double linewidth = cfg.line.fwhm_hz;
  if (sc.linewidth_hz) linewidth = *sc.linewidth_hz;
  if (sc.t2_star_s) check(nvmag_linewidth_from_t2star(*sc.t2_star_s, &linewidth));

  double eta = 0.0;
  check(nvmag_cw_sensitivity(linewidth, sc.contrast, sc.count_rate_per_s, cfg.spin.gamma_hz_per_t,
                             sc.convention, &eta));
  json report = {{"linewidth_hz", linewidth},
                 {"contrast", sc.contrast},
                 {"count_rate_per_s", sc.count_rate_per_s},
                 {"gamma_hz_per_t", cfg.spin.gamma_hz_per_t},
                 {"gamma_convention", sc.convention == NVMAG_GAMMA_ORDINARY ? "ordinary" : "angular"},
                 {"eta_t_per_sqrt_hz", eta}};
  std::printf("eta = %.6g T/sqrt(Hz)\n", eta);

  if (sc.mode_area_um2) {
    const double* md = sc.mode_dose ? &*sc.mode_dose : nullptr;
    const double* rd = sc.reference_dose ? &*sc.reference_dose : nullptr;
    double scale = 0.0;
    check(nvmag_ensemble_scale(*sc.mode_area_um2, *sc.reference_area_um2, md, rd, &scale));
    // Shot-noise limit: count rate grows with the addressed population.
    report["ensemble_scale"] = scale;
    report["eta_scaled_t_per_sqrt_hz"] = eta / std::sqrt(scale);
    std::printf("ensemble scale = %.6g\n", scale);
  }
  write_json(join(dir, "sensitivity.json"), report);
  return 0;
}

}  // namespace cli
