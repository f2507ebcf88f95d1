#include <cstdio>

#include "CLI11.hpp"
#include "commands.hpp"

namespace {

template <class T>
void optional_option(CLI::App* app, const std::string& name, std::optional<T>& target,
                     const std::string& help) {
  app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NV-center ODMR vector magnetometry toolkit"};
  app.set_version_flag("--version", std::string(nvmag_version()));
  app.require_subcommand(1);

  cli::SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Synthesize ODMR spectra and a ground-truth manifest");
  simulate->add_option("--config", sim.config, "Run configuration (JSON)")->required();
  optional_option(simulate, "--seed", sim.seed, "Noise seed, overrides noise.seed");
  optional_option(simulate, "--out", sim.out, "Output directory");

  cli::FitArgs fit;
  auto* fitc = app.add_subcommand("fit", "Fit Lorentzian dips to spectrum CSV files");
  fitc->add_option("inputs", fit.inputs, "Spectrum CSV files")->required();
  optional_option(fitc, "--config", fit.config, "Run configuration (JSON)");
  optional_option(fitc, "--n-dips", fit.n_dips, "Number of dips per spectrum");
  optional_option(fitc, "--jobs", fit.jobs, "Worker threads");
  optional_option(fitc, "--out", fit.out, "Output directory");
  fitc->add_flag("--allow-partial", fit.allow_partial, "Exit 0 even if some fits did not converge");

  cli::ReconstructArgs rec;
  auto* recon = app.add_subcommand("reconstruct", "Reconstruct field vectors from fit or pair reports");
  recon->add_option("inputs", rec.inputs, "Fit reports or pair documents")->required();
  optional_option(recon, "--config", rec.config, "Run configuration (JSON)");
  optional_option(recon, "--hint", rec.hint, "Out-of-plane hemisphere: toward|away");
  optional_option(recon, "--out", rec.out, "Output directory");

  cli::WiremapArgs wm;
  auto* wiremap = app.add_subcommand("wiremap", "Field map of the configured wire");
  wiremap->add_option("--config", wm.config, "Run configuration (JSON)")->required();
  optional_option(wiremap, "--jobs", wm.jobs, "Worker threads");
  optional_option(wiremap, "--out", wm.out, "Output directory");

  cli::SensitivityArgs sens;
  auto* sensitivity = app.add_subcommand("sensitivity", "Shot-noise-limited CW sensitivity");
  sensitivity->add_option("--config", sens.config, "Run configuration (JSON)")->required();
  optional_option(sensitivity, "--out", sens.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*simulate) return cli::cmd_simulate(sim);
    if (*fitc) return cli::cmd_fit(fit);
    if (*recon) return cli::cmd_reconstruct(rec);
    if (*wiremap) return cli::cmd_wiremap(wm);
    if (*sensitivity) return cli::cmd_sensitivity(sens);
  } catch (const cli::Failure& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == NVMAG_ERR_INTERNAL ? 1 : e.code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
