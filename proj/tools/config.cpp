#include "config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace cli {

void invalid(const std::string& what) { throw Failure(2, what); }

void check(nvmag_status status) {
  if (status != NVMAG_OK) throw Failure(static_cast<int>(status), nvmag_last_error());
}

namespace {

// Typed access to one config object. Every key read is recorded so that
// finish() can reject the rest.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) invalid("config: " + where() + " must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key) && !obj_.at(key).is_null();
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return obj_.at(key);
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const json& v = obj_.at(key);
    if (!v.is_number()) invalid("config: " + name(key) + " must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) invalid("config: " + name(key) + " must be finite");
    return x;
  }

  double positive(const std::string& key, double fallback) {
    const double x = number(key, fallback);
    if (!(x > 0.0)) invalid("config: " + name(key) + " must be positive");
    return x;
  }

  double non_negative(const std::string& key, double fallback) {
    const double x = number(key, fallback);
    if (x < 0.0) invalid("config: " + name(key) + " must not be negative");
    return x;
  }

  std::optional<double> optional_positive(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return positive(key, 0.0);
  }

  std::uint64_t count(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const json& v = obj_.at(key);
    if (!v.is_number_unsigned()) invalid("config: " + name(key) + " must be a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool flag(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = obj_.at(key);
    if (!v.is_boolean()) invalid("config: " + name(key) + " must be true or false");
    return v.get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = obj_.at(key);
    if (!v.is_string()) invalid("config: " + name(key) + " must be a string");
    return v.get<std::string>();
  }

  void vec3(const std::string& key, double out[3]) {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_array() || v.size() != 3) invalid("config: " + name(key) + " must be [x, y, z]");
    for (int i = 0; i < 3; ++i) {
      if (!v[i].is_number()) invalid("config: " + name(key) + " must hold numbers");
      out[i] = v[i].get<double>();
    }
  }

  std::vector<double> numbers(const std::string& key) {
    std::vector<double> out;
    if (!has(key)) return out;
    const json& v = obj_.at(key);
    if (!v.is_array()) invalid("config: " + name(key) + " must be an array");
    for (const auto& x : v) {
      if (!x.is_number()) invalid("config: " + name(key) + " must hold numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  Section child(const std::string& key) { return Section(raw(key), name(key)); }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) invalid("config: unknown key '" + name(key) + "'");
    }
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "top level" : path_; }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void parse_spin(Section s, nvmag_spin_params& spin) {
  spin.d_hz = s.positive("d_hz", spin.d_hz);
  spin.e_hz = s.non_negative("e_hz", spin.e_hz);
  spin.gamma_hz_per_t = s.positive("gamma_hz_per_t", spin.gamma_hz_per_t);
  s.finish();
}

void parse_geometry(Section s, RunConfig& cfg) {
  cfg.facet = s.text("facet", cfg.facet);
  if (s.has("active_axes")) {
    const json& v = s.raw("active_axes");
    if (!v.is_array() || v.empty()) invalid("config: geometry.active_axes must be a non-empty array");
    for (double& w : cfg.line.axis_weights) w = 0.0;
    for (const auto& x : v) {
      if (!x.is_number_unsigned() || x.get<std::uint64_t>() > 3)
        invalid("config: geometry.active_axes entries must be axis indices 0..3");
      cfg.line.axis_weights[x.get<std::size_t>()] = 1.0;
    }
  }
  if (s.has("axis_weights")) {
    const auto w = s.numbers("axis_weights");
    if (w.size() != 4) invalid("config: geometry.axis_weights must hold four values");
    for (int i = 0; i < 4; ++i) {
      if (w[i] < 0.0) invalid("config: geometry.axis_weights must not be negative");
      cfg.line.axis_weights[i] = w[i];
    }
  }
  s.finish();
}

void parse_line_shape(Section s, nvmag_line_shape& line) {
  if (s.has("fwhm_hz") && s.has("t2_star_s"))
    invalid("config: line_shape takes fwhm_hz or t2_star_s, not both");
  if (s.has("t2_star_s")) {
    check(nvmag_linewidth_from_t2star(s.positive("t2_star_s", 0.0), &line.fwhm_hz));
  } else {
    line.fwhm_hz = s.positive("fwhm_hz", line.fwhm_hz);
  }
  line.contrast = s.positive("contrast", line.contrast);
  if (line.contrast >= 1.0) invalid("config: line_shape.contrast must be below 1");
  line.baseline_counts_per_s = s.positive("baseline_counts_per_s", line.baseline_counts_per_s);
  s.finish();
}

void parse_scan(Section s, ScanConfig& scan) {
  scan.start_hz = s.positive("start_hz", scan.start_hz);
  scan.stop_hz = s.positive("stop_hz", scan.stop_hz);
  scan.points = s.count("points", scan.points);
  if (scan.stop_hz <= scan.start_hz) invalid("config: scan.stop_hz must exceed scan.start_hz");
  if (scan.points < 8) invalid("config: scan.points must be at least 8");
  s.finish();
}

void parse_sources(Section s, RunConfig& cfg) {
  s.vec3("bias_t", cfg.bias_t);
  if (s.has("wire")) {
    Section w = s.child("wire");
    WireConfig wc;
    wc.wire.direction[0] = 1.0;
    w.vec3("direction", wc.wire.direction);
    w.vec3("center_m", wc.wire.center_m);
    wc.wire.radius_m = w.positive("radius_m", 10e-6);
    wc.currents_a = w.numbers("currents_a");
    if (wc.currents_a.empty()) invalid("config: sources.wire.currents_a must list at least one current");
    nvmag_wire_options_default(&wc.options);
    const std::string model = w.text("model", "infinite");
    if (model == "finite_segment") {
      wc.options.finite_segment = 1;
    } else if (model != "infinite") {
      invalid("config: sources.wire.model must be \"infinite\" or \"finite_segment\"");
    }
    wc.options.segment_length_m = w.positive("segment_length_m", wc.options.segment_length_m);
    wc.options.quadrature_points =
        static_cast<int>(w.count("quadrature_points", wc.options.quadrature_points));
    if (wc.options.quadrature_points < 2) invalid("config: sources.wire.quadrature_points must be at least 2");
    w.finish();
    cfg.wire = wc;
  }
  if (s.has("probe")) {
    Section p = s.child("probe");
    cfg.probe.standoff_m = p.positive("standoff_m", cfg.probe.standoff_m);
    cfg.probe.depth_m = p.non_negative("depth_m", cfg.probe.depth_m);
    p.finish();
  }
  s.finish();
}

void parse_fit(Section s, FitConfig& fit) {
  fit.n_dips = static_cast<int>(s.count("n_dips", 0));
  if (fit.n_dips % 2 != 0) invalid("config: fit.n_dips must be even");
  fit.options.shot_noise_weights = s.flag("shot_noise_weights", fit.options.shot_noise_weights);
  fit.options.shared_fwhm = s.flag("shared_fwhm", fit.options.shared_fwhm);
  fit.options.max_iterations = static_cast<int>(s.count("max_iterations", fit.options.max_iterations));
  if (fit.options.max_iterations < 1) invalid("config: fit.max_iterations must be positive");
  fit.options.min_prominence = s.positive("min_prominence", fit.options.min_prominence);
  fit.options.initial_fwhm_hz = s.non_negative("initial_fwhm_hz", fit.options.initial_fwhm_hz);
  fit.jobs = static_cast<unsigned>(s.count("jobs", fit.jobs));
  if (fit.jobs < 1) invalid("config: fit.jobs must be at least 1");
  s.finish();
}

void parse_reconstruction(Section s, ReconstructionConfig& rc) {
  if (s.has("hint")) rc.options.hint = parse_hint(s.text("hint", "toward"));
  rc.options.resolve_out_of_plane = s.flag("resolve_out_of_plane", rc.options.resolve_out_of_plane);
  rc.options.low_confidence_deg = s.positive("low_confidence_deg", rc.options.low_confidence_deg);
  rc.options.intersect_tolerance_deg =
      s.non_negative("intersect_tolerance_deg", rc.options.intersect_tolerance_deg);
  rc.options.polarization_reference_deg =
      s.number("polarization_reference_deg", rc.options.polarization_reference_deg);
  if (s.has("orientations")) {
    const json& v = s.raw("orientations");
    if (!v.is_array()) invalid("config: reconstruction.orientations must be an array");
    for (const auto& x : v) {
      if (x.is_null()) {
        rc.orientations.push_back(std::nullopt);
      } else if (x.is_number_unsigned() && x.get<std::uint64_t>() <= 3) {
        rc.orientations.push_back(x.get<std::size_t>());
      } else {
        invalid("config: reconstruction.orientations entries must be 0..3 or null");
      }
    }
  }
  const std::string e_source = s.text("e_source", "config");
  if (e_source == "zero_field") {
    rc.zero_field_report = s.text("zero_field_report", "");
    if (rc.zero_field_report.empty())
      invalid("config: reconstruction.e_source \"zero_field\" needs zero_field_report");
  } else if (e_source != "config") {
    invalid("config: reconstruction.e_source must be \"config\" or \"zero_field\"");
  } else if (s.has("zero_field_report")) {
    invalid("config: reconstruction.zero_field_report requires e_source \"zero_field\"");
  }
  s.finish();
}

void parse_map(Section s, RunConfig& cfg) {
  nvmag_grid g{-50e-6, 50e-6, -50e-6, 50e-6, 101, 101, 0.0};
  g.y_min_m = s.number("y_min_m", g.y_min_m);
  g.y_max_m = s.number("y_max_m", g.y_max_m);
  g.z_min_m = s.number("z_min_m", g.z_min_m);
  g.z_max_m = s.number("z_max_m", g.z_max_m);
  g.ny = s.count("ny", g.ny);
  g.nz = s.count("nz", g.nz);
  g.x_m = s.number("x_m", g.x_m);
  if (g.ny < 2 || g.nz < 2) invalid("config: map.ny and map.nz must be at least 2");
  if (!(g.y_max_m > g.y_min_m) || !(g.z_max_m > g.z_min_m))
    invalid("config: map ranges must be increasing");
  s.finish();
  cfg.map = g;
}

void parse_sensitivity(Section s, SensitivityConfig& sc) {
  if (s.has("linewidth_hz") && s.has("t2_star_s"))
    invalid("config: sensitivity takes linewidth_hz or t2_star_s, not both");
  sc.linewidth_hz = s.optional_positive("linewidth_hz");
  sc.t2_star_s = s.optional_positive("t2_star_s");
  sc.contrast = s.positive("contrast", sc.contrast);
  sc.count_rate_per_s = s.positive("count_rate_per_s", sc.count_rate_per_s);
  const std::string conv = s.text("gamma_convention", "angular");
  if (conv == "ordinary") {
    sc.convention = NVMAG_GAMMA_ORDINARY;
  } else if (conv != "angular") {
    invalid("config: sensitivity.gamma_convention must be \"angular\" or \"ordinary\"");
  }
  sc.mode_area_um2 = s.optional_positive("mode_area_um2");
  sc.reference_area_um2 = s.optional_positive("reference_area_um2");
  sc.mode_dose = s.optional_positive("mode_dose");
  sc.reference_dose = s.optional_positive("reference_dose");
  if (sc.mode_area_um2.has_value() != sc.reference_area_um2.has_value())
    invalid("config: sensitivity.mode_area_um2 and reference_area_um2 go together");
  if (sc.mode_dose.has_value() != sc.reference_dose.has_value())
    invalid("config: sensitivity.mode_dose and reference_dose go together");
  s.finish();
}

}  // namespace

int RunConfig::active_orientations() const {
  int n = 0;
  for (double w : line.axis_weights) n += w > 0.0 ? 1 : 0;
  return n;
}

nvmag_hint parse_hint(const std::string& s) {
  if (s == "toward") return NVMAG_HINT_TOWARD;
  if (s == "away") return NVMAG_HINT_AWAY;
  invalid("hint must be \"toward\" or \"away\", got \"" + s + "\"");
}

RunConfig default_config() {
  RunConfig cfg;
  nvmag_spin_params_default(&cfg.spin);
  nvmag_line_shape_default(&cfg.line);
  nvmag_fit_options_default(&cfg.fit.options);
  nvmag_reconstruct_options_default(&cfg.reconstruction.options);
  return cfg;
}

RunConfig parse_config(const json& doc) {
  RunConfig cfg = default_config();
  Section top(doc, "");
  if (top.has("spin")) parse_spin(top.child("spin"), cfg.spin);
  // line_shape before geometry: both touch the line parameters.
  if (top.has("line_shape")) parse_line_shape(top.child("line_shape"), cfg.line);
  if (top.has("geometry")) parse_geometry(top.child("geometry"), cfg);
  if (top.has("noise")) {
    Section n = top.child("noise");
    cfg.noise = n.flag("enabled", cfg.noise);
    cfg.seed = n.count("seed", cfg.seed);
    n.finish();
  }
  if (top.has("scan")) parse_scan(top.child("scan"), cfg.scan);
  if (top.has("sources")) parse_sources(top.child("sources"), cfg);
  if (top.has("fit")) parse_fit(top.child("fit"), cfg.fit);
  if (top.has("reconstruction")) parse_reconstruction(top.child("reconstruction"), cfg.reconstruction);
  if (top.has("map")) parse_map(top.child("map"), cfg);
  if (top.has("sensitivity")) parse_sensitivity(top.child("sensitivity"), cfg.sensitivity);
  if (top.has("output")) {
    Section o = top.child("output");
    cfg.out_dir = o.text("dir", cfg.out_dir);
    o.finish();
  }
  top.finish();
  if (cfg.active_orientations() == 0) invalid("config: no active orientation");
  return cfg;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Failure(4, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    invalid(path + ": " + e.what());
  }
}

RunConfig load_config(const std::string& path) { return parse_config(read_json_file(path)); }

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Failure(4, "cannot write " + path);
  out << text;
  if (!out) throw Failure(4, "write failed: " + path);
}

}  // namespace cli
