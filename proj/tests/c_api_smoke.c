/* Compiles the public header as C and runs a noiseless zero-field fit. */
#include <math.h>
#include <stdio.h>

#include "nvmag/nvmag.h"

int main(void) {
  nvmag_geometry* geom = NULL;
  nvmag_spin_params spin;
  nvmag_line_shape line;
  nvmag_spectrum* spec = NULL;
  nvmag_fit_options opts;
  nvmag_fit* fit = NULL;
  nvmag_fit_summary summary;
  const double b[3] = {0.0, 0.0, 0.0};
  double nu1, nu2, mag;
  nvmag_dip lo, hi;

  if (nvmag_geometry_create("(110)", &geom) != NVMAG_OK) goto fail;
  nvmag_spin_params_default(&spin);
  nvmag_line_shape_default(&line);
  if (nvmag_spectrum_simulate(geom, &spin, &line, b, 2.82e9, 2.92e9, 1001, 0, 3, &spec) != NVMAG_OK)
    goto fail;
  nvmag_fit_options_default(&opts);
  if (nvmag_fit_spectrum(spec, 2, &opts, &fit) != NVMAG_OK) goto fail;
  if (nvmag_fit_get_summary(fit, &summary) != NVMAG_OK || !summary.converged) goto fail;
  if (nvmag_fit_dip(fit, 0, &lo) != NVMAG_OK || nvmag_fit_dip(fit, 1, &hi) != NVMAG_OK) goto fail;
  nu1 = lo.center_hz;
  nu2 = hi.center_hz;
  if (nvmag_b_magnitude(&spin, nu1, nu2, &mag) != NVMAG_OK) goto fail;
  printf("split %.4f MHz, |B| %.4f mT\n", (nu2 - nu1) * 1e-6, mag * 1e3);
  if (fabs(nu2 - nu1 - 16.3e6) > 0.2e6 || mag > 0.1e-3) {
    fprintf(stderr, "unexpected zero-field result\n");
    return 1;
  }
  nvmag_fit_destroy(fit);
  nvmag_spectrum_destroy(spec);
  nvmag_geometry_destroy(geom);
  return 0;

fail:
  fprintf(stderr, "error: %s\n", nvmag_last_error());
  return 1;
}
