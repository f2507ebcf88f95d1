#ifndef NVMAG_H
#define NVMAG_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define NVMAG_API __declspec(dllexport)
#else
#define NVMAG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes match the CLI exit codes. */
typedef enum {
  NVMAG_OK = 0,
  NVMAG_ERR_INVALID = 2,
  NVMAG_ERR_NUMERICAL = 3,
  NVMAG_ERR_IO = 4,
  NVMAG_ERR_INTERNAL = 5
} nvmag_status;

/* Message of the last failed call on this thread; never NULL. */
NVMAG_API const char* nvmag_last_error(void);
NVMAG_API const char* nvmag_version(void);

typedef struct {
  double d_hz;
  double e_hz;
  double gamma_hz_per_t;
} nvmag_spin_params;

typedef struct {
  double fwhm_hz;
  double contrast;
  double baseline_counts_per_s;
  double axis_weights[4];
} nvmag_line_shape;

NVMAG_API void nvmag_spin_params_default(nvmag_spin_params* out);
NVMAG_API void nvmag_line_shape_default(nvmag_line_shape* out);

/* Geometry */

typedef struct nvmag_geometry nvmag_geometry;

typedef enum {
  NVMAG_AXIS_IN_PLANE = 0,
  NVMAG_AXIS_OUT_OF_PLANE_INWARD = 1,
  NVMAG_AXIS_OUT_OF_PLANE_OUTWARD = 2
} nvmag_axis_label;

NVMAG_API nvmag_status nvmag_geometry_create(const char* facet, nvmag_geometry** out);
NVMAG_API void nvmag_geometry_destroy(nvmag_geometry* geom);
NVMAG_API nvmag_status nvmag_geometry_axis(const nvmag_geometry* geom, size_t index, double axis[3],
                                           nvmag_axis_label* label);

/* Forward model */

NVMAG_API nvmag_status nvmag_resonance_pair(const nvmag_spin_params* spin, const double b_t[3],
                                            const double axis[3], double* nu1_hz, double* nu2_hz);

typedef struct nvmag_spectrum nvmag_spectrum;

/* Noise is applied when `noisy` is nonzero. */
NVMAG_API nvmag_status nvmag_spectrum_simulate(const nvmag_geometry* geom,
                                               const nvmag_spin_params* spin,
                                               const nvmag_line_shape* line, const double b_t[3],
                                               double start_hz, double stop_hz, size_t points,
                                               int noisy, uint64_t seed, nvmag_spectrum** out);
NVMAG_API nvmag_status nvmag_spectrum_read_csv(const char* path, nvmag_spectrum** out);
NVMAG_API nvmag_status nvmag_spectrum_write_csv(const nvmag_spectrum* spec, const char* path);
NVMAG_API size_t nvmag_spectrum_size(const nvmag_spectrum* spec);
NVMAG_API nvmag_status nvmag_spectrum_data(const nvmag_spectrum* spec, const double** freqs_hz,
                                           const double** signal, const double** counts_per_s);
NVMAG_API void nvmag_spectrum_destroy(nvmag_spectrum* spec);

/* Spectral fitting */

typedef struct {
  int shot_noise_weights;
  int analytic_jacobian;
  int shared_fwhm;
  int max_iterations;
  double min_prominence;
  double initial_fwhm_hz; /* 0: estimate */
} nvmag_fit_options;

NVMAG_API void nvmag_fit_options_default(nvmag_fit_options* out);

typedef struct {
  double center_hz;
  double center_sigma_hz;
  double fwhm_hz;
  double fwhm_sigma_hz;
  double contrast;
  double contrast_sigma;
} nvmag_dip;

typedef struct {
  double baseline;
  double baseline_sigma;
  double cost;
  int iterations;
  int converged;
  int degenerate;
} nvmag_fit_summary;

typedef struct nvmag_fit nvmag_fit;

NVMAG_API nvmag_status nvmag_fit_spectrum(const nvmag_spectrum* spec, int n_dips,
                                          const nvmag_fit_options* options, nvmag_fit** out);
/* Fits `count` spectra on `jobs` threads; out receives `count` handles. The
   results do not depend on `jobs`. */
NVMAG_API nvmag_status nvmag_fit_many(const nvmag_spectrum* const* spectra, size_t count, int n_dips,
                                      const nvmag_fit_options* options, unsigned jobs,
                                      nvmag_fit** out);
NVMAG_API size_t nvmag_fit_dip_count(const nvmag_fit* fit);
NVMAG_API nvmag_status nvmag_fit_dip(const nvmag_fit* fit, size_t index, nvmag_dip* out);
NVMAG_API nvmag_status nvmag_fit_get_summary(const nvmag_fit* fit, nvmag_fit_summary* out);
NVMAG_API const char* nvmag_fit_message(const nvmag_fit* fit);
NVMAG_API void nvmag_fit_destroy(nvmag_fit* fit);

typedef struct {
  double nu1_hz;
  double nu2_hz;
  double nu1_sigma_hz;
  double nu2_sigma_hz;
  int asymmetric;
} nvmag_pair;

/* Pairs k-th lowest with k-th highest; out holds n/2 pairs in descending
   splitting. `warning` is set when a pair midpoint strays from D. */
NVMAG_API nvmag_status nvmag_pair_dips(const nvmag_dip* dips, size_t n, double d_hz, nvmag_pair* out,
                                       int* warning);

/* Inversion */

NVMAG_API nvmag_status nvmag_b_magnitude(const nvmag_spin_params* spin, double nu1_hz, double nu2_hz,
                                         double* out_t);
NVMAG_API nvmag_status nvmag_polar_angle(const nvmag_spin_params* spin, double nu1_hz, double nu2_hz,
                                         double* out_deg);
NVMAG_API nvmag_status nvmag_azimuthal_angles(double proj2_t, double proj3_t, double* phi1_deg,
                                              double* phi2_deg);

typedef enum { NVMAG_HINT_TOWARD = 0, NVMAG_HINT_AWAY = 1 } nvmag_hint;

typedef struct {
  size_t axis_index;
  nvmag_pair pair;
} nvmag_axis_measurement;

typedef struct {
  nvmag_hint hint;
  int resolve_out_of_plane;
  double low_confidence_deg;
  double intersect_tolerance_deg;
  double polarization_reference_deg;
} nvmag_reconstruct_options;

NVMAG_API void nvmag_reconstruct_options_default(nvmag_reconstruct_options* out);

typedef struct {
  double b_crystal_t[3];
  double b_lab_t[3];
  double b_sigma_t[3];
  double magnitude_t;
  double magnitude_sigma_t;
  double direction_sigma_deg;
  double triangle_diameter_deg;
  double triangle[3][3];
  size_t axis_indices[3];
  double axis_magnitude_t[3];
  double axis_magnitude_sigma_t[3];
  double axis_theta_deg[3];
  double axis_theta_sigma_deg[3];
  double cone_axis[3][3];
  int cone_mirrored[3];
  double residual_t[3];
  int has_azimuth;
  double phi1_deg;
  double phi2_deg;
  double alternate_phi1_deg;
  double alternate_phi2_deg;
  int low_confidence;
  int convention_overridden;
} nvmag_reconstruction;

NVMAG_API nvmag_status nvmag_reconstruct(const nvmag_geometry* geom, const nvmag_spin_params* spin,
                                         const nvmag_axis_measurement* measurements, size_t count,
                                         const nvmag_reconstruct_options* options,
                                         nvmag_reconstruction* out);

/* a - b in the crystal frame. */
NVMAG_API nvmag_status nvmag_vector_difference(const nvmag_reconstruction* a,
                                               const nvmag_reconstruction* b, double delta_t[3],
                                               double* magnitude_t, double* magnitude_sigma_t);

NVMAG_API nvmag_status nvmag_fit_current_response(const double* currents_a, const double* resonances_hz,
                                                  size_t n, const nvmag_spin_params* spin,
                                                  double* slope_hz_per_a, double* slope_sigma_hz_per_a,
                                                  double* field_per_current_t_per_a,
                                                  double* field_per_current_sigma_t_per_a);

/* Sources */

typedef struct {
  double direction[3];
  double center_m[3];
  double radius_m;
  double current_a;
} nvmag_wire;

typedef struct {
  int finite_segment;
  double segment_length_m;
  int quadrature_points;
} nvmag_wire_options;

NVMAG_API void nvmag_wire_options_default(nvmag_wire_options* out);
NVMAG_API nvmag_status nvmag_wire_field(const nvmag_wire* wire, const nvmag_wire_options* options,
                                        const double point_m[3], double b_t[3]);
NVMAG_API nvmag_status nvmag_probe_point(const nvmag_wire* wire, double standoff_m, double depth_m,
                                         double point_m[3]);
/* Lab-frame field to the crystal frame (rotation about the facet normal). */
NVMAG_API nvmag_status nvmag_lab_to_crystal(const nvmag_geometry* geom, const double lab_t[3],
                                            double polarization_reference_deg, double crystal_t[3]);

typedef struct {
  double y_min_m;
  double y_max_m;
  double z_min_m;
  double z_max_m;
  size_t ny;
  size_t nz;
  double x_m;
} nvmag_grid;

typedef struct nvmag_field_map nvmag_field_map;

NVMAG_API nvmag_status nvmag_field_map_create(const nvmag_wire* wire, const nvmag_wire_options* options,
                                              const nvmag_grid* grid, unsigned jobs,
                                              nvmag_field_map** out);
NVMAG_API size_t nvmag_field_map_size(const nvmag_field_map* map);
NVMAG_API nvmag_status nvmag_field_map_node(const nvmag_field_map* map, size_t index, double* y_m,
                                            double* z_m, double b_t[3]);
NVMAG_API nvmag_status nvmag_field_map_write_csv(const nvmag_field_map* map, const char* path);
NVMAG_API void nvmag_field_map_destroy(nvmag_field_map* map);

NVMAG_API nvmag_status nvmag_footprint_field(const nvmag_wire* wire, const nvmag_wire_options* options,
                                             const double center_m[3], double radius_m,
                                             double* mean_t, double* stddev_t, double* min_t,
                                             double* max_t);

/* Metrics */

typedef enum { NVMAG_GAMMA_ANGULAR = 0, NVMAG_GAMMA_ORDINARY = 1 } nvmag_gamma_convention;

NVMAG_API nvmag_status nvmag_cw_sensitivity(double linewidth_hz, double contrast, double count_rate_per_s,
                                            double gamma_hz_per_t, nvmag_gamma_convention convention,
                                            double* out_t_per_sqrt_hz);
NVMAG_API nvmag_status nvmag_linewidth_from_t2star(double t2_star_s, double* out_hz);
/* Doses may be NULL (both or neither). */
NVMAG_API nvmag_status nvmag_ensemble_scale(double mode_area_um2, double reference_area_um2,
                                            const double* mode_dose, const double* reference_dose,
                                            double* out);

#ifdef __cplusplus
}
#endif

#endif
