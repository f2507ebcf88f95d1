#include "nvmag/nvmag.h"

#include <exception>
#include <new>
#include <string>
#include <vector>

#include "nvmag/inversion.hpp"
#include "nvmag/io.hpp"
#include "nvmag/metrics.hpp"
#include "nvmag/sources.hpp"
#include "nvmag/spectral_fit.hpp"
#include "nvmag/spin_model.hpp"

struct nvmag_geometry {
  nvmag::CrystalGeometry geom;
};

struct nvmag_spectrum {
  nvmag::OdmrSpectrum spec;
};

struct nvmag_fit {
  nvmag::FitReport report;
};

struct nvmag_field_map {
  nvmag::FieldMap map;
};

namespace {

thread_local std::string g_last_error;

nvmag_status fail(nvmag_status code, const std::string& what) {
  g_last_error = what;
  return code;
}

template <class F>
nvmag_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return NVMAG_OK;
  } catch (const nvmag::Error& e) {
    return fail(static_cast<nvmag_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return fail(NVMAG_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(NVMAG_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(NVMAG_ERR_INTERNAL, "unknown error");
  }
}

void require(const void* p, const char* name) {
  if (p == nullptr) nvmag::throw_invalid(std::string(name) + " must not be null");
}

nvmag::Vec3 vec(const double v[3]) { return nvmag::Vec3(v[0], v[1], v[2]); }

void put(const nvmag::Vec3& v, double out[3]) {
  out[0] = v.x();
  out[1] = v.y();
  out[2] = v.z();
}

nvmag::SpinParams spin_from(const nvmag_spin_params* p) {
  nvmag::SpinParams s;
  if (p != nullptr) {
    s.d_hz = p->d_hz;
    s.e_hz = p->e_hz;
    s.gamma_hz_per_t = p->gamma_hz_per_t;
  }
  s.validate();
  return s;
}

nvmag::FitOptions fit_options_from(const nvmag_fit_options* o) {
  nvmag::FitOptions f;
  if (o != nullptr) {
    f.shot_noise_weights = o->shot_noise_weights != 0;
    f.analytic_jacobian = o->analytic_jacobian != 0;
    f.shared_fwhm = o->shared_fwhm != 0;
    if (o->max_iterations <= 0) nvmag::throw_invalid("max_iterations must be positive");
    f.lm.max_iterations = o->max_iterations;
    f.min_prominence = o->min_prominence;
    f.initial_fwhm_hz = o->initial_fwhm_hz;
  }
  return f;
}

nvmag::PairedDips pair_from(const nvmag_pair& p) {
  nvmag::PairedDips out;
  out.pair = nvmag::ResonancePair(p.nu1_hz, p.nu2_hz);
  out.nu1_sigma_hz = p.nu1_sigma_hz;
  out.nu2_sigma_hz = p.nu2_sigma_hz;
  out.asymmetric = p.asymmetric != 0;
  return out;
}

nvmag::WireSource wire_from(const nvmag_wire* w) {
  require(w, "wire");
  nvmag::WireSource s;
  s.direction = vec(w->direction);
  s.center_m = vec(w->center_m);
  s.radius_m = w->radius_m;
  s.current_a = w->current_a;
  s.validate();
  return s;
}

nvmag::WireOptions wire_options_from(const nvmag_wire_options* o) {
  nvmag::WireOptions w;
  if (o != nullptr) {
    w.model = o->finite_segment ? nvmag::WireModel::FiniteSegment : nvmag::WireModel::Infinite;
    w.segment_length_m = o->segment_length_m;
    w.quadrature_points = o->quadrature_points;
  }
  return w;
}

void put_reconstruction(const nvmag::ReconstructionResult& r, nvmag_reconstruction* out) {
  *out = nvmag_reconstruction{};
  put(r.b_crystal.tesla(), out->b_crystal_t);
  if (r.b_lab) put(r.b_lab->tesla(), out->b_lab_t);
  put(r.b_sigma_t, out->b_sigma_t);
  out->magnitude_t = r.magnitude_t;
  out->magnitude_sigma_t = r.magnitude_sigma_t;
  out->direction_sigma_deg = r.direction_sigma_deg;
  out->triangle_diameter_deg = r.triangle_diameter_deg;
  for (int i = 0; i < 3; ++i) {
    put(r.triangle[i], out->triangle[i]);
    out->axis_indices[i] = r.axis_indices[i];
    out->axis_magnitude_t[i] = r.axis_magnitude_t[i].value;
    out->axis_magnitude_sigma_t[i] = r.axis_magnitude_t[i].sigma;
    out->axis_theta_deg[i] = r.axis_theta_deg[i].value;
    out->axis_theta_sigma_deg[i] = r.axis_theta_deg[i].sigma;
    put(r.cones[i].axis, out->cone_axis[i]);
    out->cone_mirrored[i] = r.cones[i].mirrored ? 1 : 0;
    out->residual_t[i] = r.residual_t[i];
  }
  if (r.azimuth) {
    out->has_azimuth = 1;
    out->phi1_deg = r.azimuth->phi1_deg;
    out->phi2_deg = r.azimuth->phi2_deg;
    out->alternate_phi1_deg = r.azimuth->alternate_phi1_deg;
    out->alternate_phi2_deg = r.azimuth->alternate_phi2_deg;
  }
  out->low_confidence = r.low_confidence ? 1 : 0;
  out->convention_overridden = r.convention_overridden ? 1 : 0;
}

}  // namespace

extern "C" {

const char* nvmag_last_error(void) { return g_last_error.c_str(); }

const char* nvmag_version(void) { return "1.0.0"; }

void nvmag_spin_params_default(nvmag_spin_params* out) {
  if (out == nullptr) return;
  const nvmag::SpinParams s;
  *out = {s.d_hz, s.e_hz, s.gamma_hz_per_t};
}

void nvmag_line_shape_default(nvmag_line_shape* out) {
  if (out == nullptr) return;
  const nvmag::LineShapeParams l;
  out->fwhm_hz = l.fwhm_hz;
  out->contrast = l.contrast;
  out->baseline_counts_per_s = l.baseline_counts_per_s;
  for (int i = 0; i < 4; ++i) out->axis_weights[i] = l.axis_weights[i];
}

nvmag_status nvmag_geometry_create(const char* facet, nvmag_geometry** out) {
  return guarded([&] {
    require(facet, "facet");
    require(out, "out");
    *out = new nvmag_geometry{nvmag::nv_axes_for_facet(facet)};
  });
}

void nvmag_geometry_destroy(nvmag_geometry* geom) { delete geom; }

nvmag_status nvmag_geometry_axis(const nvmag_geometry* geom, size_t index, double axis[3],
                                 nvmag_axis_label* label) {
  return guarded([&] {
    require(geom, "geometry");
    if (index >= 4) nvmag::throw_invalid("axis index must be 0..3");
    if (axis != nullptr) put(geom->geom.axes[index], axis);
    if (label != nullptr) {
      switch (geom->geom.labels[index]) {
        case nvmag::AxisLabel::InPlane: *label = NVMAG_AXIS_IN_PLANE; break;
        case nvmag::AxisLabel::OutOfPlaneInward: *label = NVMAG_AXIS_OUT_OF_PLANE_INWARD; break;
        case nvmag::AxisLabel::OutOfPlaneOutward: *label = NVMAG_AXIS_OUT_OF_PLANE_OUTWARD; break;
      }
    }
  });
}

nvmag_status nvmag_resonance_pair(const nvmag_spin_params* spin, const double b_t[3],
                                  const double axis[3], double* nu1_hz, double* nu2_hz) {
  return guarded([&] {
    require(b_t, "b_t");
    require(axis, "axis");
    require(nu1_hz, "nu1_hz");
    require(nu2_hz, "nu2_hz");
    const auto p = nvmag::resonance_frequencies(nvmag::FieldVector(vec(b_t), nvmag::Frame::Crystal),
                                                vec(axis), spin_from(spin));
    *nu1_hz = p.nu1_hz;
    *nu2_hz = p.nu2_hz;
  });
}

nvmag_status nvmag_spectrum_simulate(const nvmag_geometry* geom, const nvmag_spin_params* spin,
                                     const nvmag_line_shape* line, const double b_t[3],
                                     double start_hz, double stop_hz, size_t points, int noisy,
                                     uint64_t seed, nvmag_spectrum** out) {
  return guarded([&] {
    require(geom, "geometry");
    require(b_t, "b_t");
    require(out, "out");
    nvmag::LineShapeParams l;
    if (line != nullptr) {
      l.fwhm_hz = line->fwhm_hz;
      l.contrast = line->contrast;
      l.baseline_counts_per_s = line->baseline_counts_per_s;
      for (int i = 0; i < 4; ++i) l.axis_weights[i] = line->axis_weights[i];
    }
    const auto scan = nvmag::linear_grid(start_hz, stop_hz, points);
    std::optional<nvmag::PoissonNoise> noise;
    if (noisy) noise = nvmag::PoissonNoise{seed};
    auto spec = nvmag::odmr_spectrum(nvmag::FieldVector(vec(b_t), nvmag::Frame::Crystal), geom->geom,
                                     spin_from(spin), l, scan, noise);
    *out = new nvmag_spectrum{std::move(spec)};
  });
}

nvmag_status nvmag_spectrum_read_csv(const char* path, nvmag_spectrum** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new nvmag_spectrum{nvmag::read_spectrum_csv(std::string(path))};
  });
}

nvmag_status nvmag_spectrum_write_csv(const nvmag_spectrum* spec, const char* path) {
  return guarded([&] {
    require(spec, "spectrum");
    require(path, "path");
    nvmag::write_spectrum_csv(std::string(path), spec->spec);
  });
}

size_t nvmag_spectrum_size(const nvmag_spectrum* spec) { return spec ? spec->spec.size() : 0; }

nvmag_status nvmag_spectrum_data(const nvmag_spectrum* spec, const double** freqs_hz,
                                 const double** signal, const double** counts_per_s) {
  return guarded([&] {
    require(spec, "spectrum");
    if (freqs_hz) *freqs_hz = spec->spec.freqs_hz.data();
    if (signal) *signal = spec->spec.signal.data();
    if (counts_per_s)
      *counts_per_s = spec->spec.counts_per_s.empty() ? nullptr : spec->spec.counts_per_s.data();
  });
}

void nvmag_spectrum_destroy(nvmag_spectrum* spec) { delete spec; }

void nvmag_fit_options_default(nvmag_fit_options* out) {
  if (out == nullptr) return;
  const nvmag::FitOptions f;
  out->shot_noise_weights = f.shot_noise_weights;
  out->analytic_jacobian = 1;
  out->shared_fwhm = f.shared_fwhm;
  out->max_iterations = f.lm.max_iterations;
  out->min_prominence = f.min_prominence;
  out->initial_fwhm_hz = f.initial_fwhm_hz;
}

nvmag_status nvmag_fit_spectrum(const nvmag_spectrum* spec, int n_dips,
                                const nvmag_fit_options* options, nvmag_fit** out) {
  return guarded([&] {
    require(spec, "spectrum");
    require(out, "out");
    *out = new nvmag_fit{nvmag::fit_lorentzians(spec->spec, n_dips, {}, fit_options_from(options))};
  });
}

nvmag_status nvmag_fit_many(const nvmag_spectrum* const* spectra, size_t count, int n_dips,
                            const nvmag_fit_options* options, unsigned jobs, nvmag_fit** out) {
  return guarded([&] {
    require(spectra, "spectra");
    require(out, "out");
    std::vector<nvmag::OdmrSpectrum> specs;
    specs.reserve(count);
    for (size_t i = 0; i < count; ++i) {
      require(spectra[i], "spectrum");
      specs.push_back(spectra[i]->spec);
    }
    auto reports = nvmag::fit_many(specs, n_dips, fit_options_from(options), jobs);
    std::vector<nvmag_fit*> made;
    try {
      for (auto& r : reports) made.push_back(new nvmag_fit{std::move(r)});
    } catch (...) {
      for (auto* f : made) delete f;
      throw;
    }
    for (size_t i = 0; i < made.size(); ++i) out[i] = made[i];
  });
}

size_t nvmag_fit_dip_count(const nvmag_fit* fit) { return fit ? fit->report.dips.size() : 0; }

nvmag_status nvmag_fit_dip(const nvmag_fit* fit, size_t index, nvmag_dip* out) {
  return guarded([&] {
    require(fit, "fit");
    require(out, "out");
    if (index >= fit->report.dips.size()) nvmag::throw_invalid("dip index out of range");
    const auto& d = fit->report.dips[index];
    *out = {d.center_hz, d.center_sigma_hz, d.fwhm_hz, d.fwhm_sigma_hz, d.contrast, d.contrast_sigma};
  });
}

nvmag_status nvmag_fit_get_summary(const nvmag_fit* fit, nvmag_fit_summary* out) {
  return guarded([&] {
    require(fit, "fit");
    require(out, "out");
    const auto& r = fit->report;
    *out = {r.baseline, r.baseline_sigma, r.cost, r.iterations, r.converged ? 1 : 0,
            r.degenerate ? 1 : 0};
  });
}

const char* nvmag_fit_message(const nvmag_fit* fit) {
  return fit ? fit->report.message.c_str() : "";
}

void nvmag_fit_destroy(nvmag_fit* fit) { delete fit; }

nvmag_status nvmag_pair_dips(const nvmag_dip* dips, size_t n, double d_hz, nvmag_pair* out,
                             int* warning) {
  return guarded([&] {
    require(dips, "dips");
    require(out, "out");
    std::vector<nvmag::DipFit> fits(n);
    for (size_t i = 0; i < n; ++i) {
      fits[i].center_hz = dips[i].center_hz;
      fits[i].center_sigma_hz = dips[i].center_sigma_hz;
      fits[i].fwhm_hz = dips[i].fwhm_hz;
      fits[i].contrast = dips[i].contrast;
    }
    const auto p = nvmag::pair_dips(std::span<const nvmag::DipFit>(fits), d_hz);
    for (size_t k = 0; k < p.pairs.size(); ++k) {
      const auto& q = p.pairs[k];
      out[k] = {q.pair.nu1_hz, q.pair.nu2_hz, q.nu1_sigma_hz, q.nu2_sigma_hz, q.asymmetric ? 1 : 0};
    }
    if (warning) *warning = p.warning ? 1 : 0;
  });
}

nvmag_status nvmag_b_magnitude(const nvmag_spin_params* spin, double nu1_hz, double nu2_hz,
                               double* out_t) {
  return guarded([&] {
    require(out_t, "out");
    *out_t = nvmag::b_magnitude(nvmag::ResonancePair(nu1_hz, nu2_hz), spin_from(spin));
  });
}

nvmag_status nvmag_polar_angle(const nvmag_spin_params* spin, double nu1_hz, double nu2_hz,
                               double* out_deg) {
  return guarded([&] {
    require(out_deg, "out");
    *out_deg = nvmag::polar_angle(nvmag::ResonancePair(nu1_hz, nu2_hz), spin_from(spin));
  });
}

nvmag_status nvmag_azimuthal_angles(double proj2_t, double proj3_t, double* phi1_deg,
                                    double* phi2_deg) {
  return guarded([&] {
    require(phi1_deg, "phi1");
    require(phi2_deg, "phi2");
    const auto a = nvmag::azimuthal_angles(proj2_t, proj3_t);
    *phi1_deg = a.phi1_deg;
    *phi2_deg = a.phi2_deg;
  });
}

void nvmag_reconstruct_options_default(nvmag_reconstruct_options* out) {
  if (out == nullptr) return;
  const nvmag::ReconstructOptions o;
  out->hint = NVMAG_HINT_TOWARD;
  out->resolve_out_of_plane = o.resolve_out_of_plane;
  out->low_confidence_deg = o.low_confidence_deg;
  out->intersect_tolerance_deg = o.intersect_tolerance_deg;
  out->polarization_reference_deg = o.polarization_reference_deg;
}

nvmag_status nvmag_reconstruct(const nvmag_geometry* geom, const nvmag_spin_params* spin,
                               const nvmag_axis_measurement* measurements, size_t count,
                               const nvmag_reconstruct_options* options,
                               nvmag_reconstruction* out) {
  return guarded([&] {
    require(geom, "geometry");
    require(measurements, "measurements");
    require(out, "out");
    std::vector<nvmag::AxisMeasurement> m(count);
    for (size_t i = 0; i < count; ++i) {
      m[i].axis_index = measurements[i].axis_index;
      m[i].pair = pair_from(measurements[i].pair);
    }
    nvmag::ReconstructOptions o;
    if (options != nullptr) {
      o.hint = options->hint == NVMAG_HINT_AWAY ? nvmag::HemisphereHint::AwayFromFacet
                                                : nvmag::HemisphereHint::TowardFacet;
      o.resolve_out_of_plane = options->resolve_out_of_plane != 0;
      o.low_confidence_deg = options->low_confidence_deg;
      o.intersect_tolerance_deg = options->intersect_tolerance_deg;
      o.polarization_reference_deg = options->polarization_reference_deg;
    }
    put_reconstruction(nvmag::reconstruct_vector(m, geom->geom, spin_from(spin), o), out);
  });
}

nvmag_status nvmag_vector_difference(const nvmag_reconstruction* a, const nvmag_reconstruction* b,
                                     double delta_t[3], double* magnitude_t,
                                     double* magnitude_sigma_t) {
  return guarded([&] {
    require(a, "a");
    require(b, "b");
    const auto d = nvmag::vector_difference(
        nvmag::FieldVector(vec(a->b_crystal_t), nvmag::Frame::Crystal), vec(a->b_sigma_t),
        nvmag::FieldVector(vec(b->b_crystal_t), nvmag::Frame::Crystal), vec(b->b_sigma_t));
    if (delta_t) put(d.delta.tesla(), delta_t);
    if (magnitude_t) *magnitude_t = d.magnitude_t;
    if (magnitude_sigma_t) *magnitude_sigma_t = d.magnitude_sigma_t;
  });
}

nvmag_status nvmag_fit_current_response(const double* currents_a, const double* resonances_hz,
                                        size_t n, const nvmag_spin_params* spin,
                                        double* slope_hz_per_a, double* slope_sigma_hz_per_a,
                                        double* field_per_current_t_per_a,
                                        double* field_per_current_sigma_t_per_a) {
  return guarded([&] {
    require(currents_a, "currents");
    require(resonances_hz, "resonances");
    std::vector<nvmag::CurrentSample> s(n);
    for (size_t i = 0; i < n; ++i) s[i] = {currents_a[i], resonances_hz[i]};
    const auto r = nvmag::fit_current_response(s, spin_from(spin));
    if (slope_hz_per_a) *slope_hz_per_a = r.slope_hz_per_a.value;
    if (slope_sigma_hz_per_a) *slope_sigma_hz_per_a = r.slope_hz_per_a.sigma;
    if (field_per_current_t_per_a) *field_per_current_t_per_a = r.field_per_current_t_per_a.value;
    if (field_per_current_sigma_t_per_a)
      *field_per_current_sigma_t_per_a = r.field_per_current_t_per_a.sigma;
  });
}

void nvmag_wire_options_default(nvmag_wire_options* out) {
  if (out == nullptr) return;
  const nvmag::WireOptions w;
  out->finite_segment = w.model == nvmag::WireModel::FiniteSegment;
  out->segment_length_m = w.segment_length_m;
  out->quadrature_points = w.quadrature_points;
}

nvmag_status nvmag_wire_field(const nvmag_wire* wire, const nvmag_wire_options* options,
                              const double point_m[3], double b_t[3]) {
  return guarded([&] {
    require(point_m, "point");
    require(b_t, "b_t");
    put(nvmag::wire_field(wire_from(wire), vec(point_m), wire_options_from(options)).tesla(), b_t);
  });
}

nvmag_status nvmag_probe_point(const nvmag_wire* wire, double standoff_m, double depth_m,
                               double point_m[3]) {
  return guarded([&] {
    require(point_m, "point");
    put(nvmag::probe_point(wire_from(wire), standoff_m, depth_m), point_m);
  });
}

nvmag_status nvmag_lab_to_crystal(const nvmag_geometry* geom, const double lab_t[3],
                                  double polarization_reference_deg, double crystal_t[3]) {
  return guarded([&] {
    require(geom, "geometry");
    require(lab_t, "lab");
    require(crystal_t, "crystal");
    const auto c = nvmag::lab_to_crystal(nvmag::FieldVector(vec(lab_t), nvmag::Frame::Lab),
                                         geom->geom, polarization_reference_deg);
    put(c.tesla(), crystal_t);
  });
}

nvmag_status nvmag_field_map_create(const nvmag_wire* wire, const nvmag_wire_options* options,
                                    const nvmag_grid* grid, unsigned jobs, nvmag_field_map** out) {
  return guarded([&] {
    require(grid, "grid");
    require(out, "out");
    nvmag::GridSpec g;
    g.y_min_m = grid->y_min_m;
    g.y_max_m = grid->y_max_m;
    g.z_min_m = grid->z_min_m;
    g.z_max_m = grid->z_max_m;
    g.ny = grid->ny;
    g.nz = grid->nz;
    g.x_m = grid->x_m;
    *out = new nvmag_field_map{nvmag::field_map(wire_from(wire), g, wire_options_from(options), jobs)};
  });
}

size_t nvmag_field_map_size(const nvmag_field_map* map) { return map ? map->map.vectors.size() : 0; }

nvmag_status nvmag_field_map_node(const nvmag_field_map* map, size_t index, double* y_m, double* z_m,
                                  double b_t[3]) {
  return guarded([&] {
    require(map, "map");
    const auto& m = map->map;
    if (index >= m.vectors.size()) nvmag::throw_invalid("node index out of range");
    const size_t iy = index % m.grid.ny;
    const size_t iz = index / m.grid.ny;
    if (y_m) *y_m = m.grid.ys()[iy];
    if (z_m) *z_m = m.grid.zs()[iz];
    if (b_t) put(m.vectors[index].tesla(), b_t);
  });
}

nvmag_status nvmag_field_map_write_csv(const nvmag_field_map* map, const char* path) {
  return guarded([&] {
    require(map, "map");
    require(path, "path");
    nvmag::write_field_map_csv(std::string(path), map->map);
  });
}

void nvmag_field_map_destroy(nvmag_field_map* map) { delete map; }

nvmag_status nvmag_footprint_field(const nvmag_wire* wire, const nvmag_wire_options* options,
                                   const double center_m[3], double radius_m, double* mean_t,
                                   double* stddev_t, double* min_t, double* max_t) {
  return guarded([&] {
    require(center_m, "center");
    const auto s = nvmag::footprint_field(wire_from(wire), vec(center_m), radius_m,
                                          wire_options_from(options));
    if (mean_t) *mean_t = s.mean_t;
    if (stddev_t) *stddev_t = s.stddev_t;
    if (min_t) *min_t = s.min_t;
    if (max_t) *max_t = s.max_t;
  });
}

nvmag_status nvmag_cw_sensitivity(double linewidth_hz, double contrast, double count_rate_per_s,
                                  double gamma_hz_per_t, nvmag_gamma_convention convention,
                                  double* out_t_per_sqrt_hz) {
  return guarded([&] {
    require(out_t_per_sqrt_hz, "out");
    nvmag::SensitivityInputs in;
    in.linewidth_hz = linewidth_hz;
    in.contrast = contrast;
    in.count_rate_per_s = count_rate_per_s;
    in.gamma_hz_per_t = gamma_hz_per_t;
    in.convention = convention == NVMAG_GAMMA_ORDINARY ? nvmag::GammaConvention::Ordinary
                                                       : nvmag::GammaConvention::Angular;
    *out_t_per_sqrt_hz = nvmag::cw_sensitivity(in);
  });
}

nvmag_status nvmag_linewidth_from_t2star(double t2_star_s, double* out_hz) {
  return guarded([&] {
    require(out_hz, "out");
    *out_hz = nvmag::linewidth_from_t2star(t2_star_s);
  });
}

nvmag_status nvmag_ensemble_scale(double mode_area_um2, double reference_area_um2,
                                  const double* mode_dose, const double* reference_dose,
                                  double* out) {
  return guarded([&] {
    require(out, "out");
    std::optional<double> a, b;
    if (mode_dose) a = *mode_dose;
    if (reference_dose) b = *reference_dose;
    *out = nvmag::ensemble_scale(mode_area_um2, reference_area_um2, a, b);
  });
}

}  // extern "C"
