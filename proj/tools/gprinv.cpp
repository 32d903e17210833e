#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "gprinv/calibration.hpp"
#include "gprinv/error.hpp"
#include "gprinv/executor.hpp"
#include "gprinv/fdtd.hpp"
#include "gprinv/mcmc.hpp"
#include "gprinv/petro.hpp"
#include "gprinv/scene.hpp"
#include "gprinv/signal.hpp"
#include "gprinv/svg.hpp"
#include "gprinv/workflow.hpp"

namespace fs = std::filesystem;
using namespace gprinv;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::size_t workers = 0;
  std::optional<std::string> output_dir;
  bool verbose = false;
};

std::uint64_t require_seed(const Globals& g, std::optional<std::uint64_t> from_config) {
  if (g.seed) {
    if (from_config && *from_config != *g.seed) {
      spdlog::info("--seed {} overrides the configured seed {}", *g.seed, *from_config);
    }
    return *g.seed;
  }
  if (from_config) return *from_config;
  throw InputError("a seed is required: pass --seed or set \"seed\" in the configuration");
}

fs::path output_dir(const Globals& g, std::optional<fs::path> from_config, const char* fallback) {
  if (g.output_dir) return *g.output_dir;
  if (from_config) return *from_config;
  return fallback;
}

std::pair<double, double> parse_range(const std::string& s, const char* what) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw InputError(fmt::format("{} must look like LOW:HIGH", what));
  try {
    return {std::stod(s.substr(0, colon)), std::stod(s.substr(colon + 1))};
  } catch (const std::logic_error&) {
    throw InputError(fmt::format("{}: '{}' is not a pair of numbers", what, s));
  }
}

struct Sweep {
  std::string path;
  double lo = 0.0, hi = 0.0;
  std::size_t n = 0;
};

Sweep parse_sweep(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) throw InputError("--sweep must look like path=lo:hi:n");
  Sweep w;
  w.path = s.substr(0, eq);
  const std::string rest = s.substr(eq + 1);
  const auto c1 = rest.find(':');
  const auto c2 = rest.find(':', c1 == std::string::npos ? c1 : c1 + 1);
  if (c1 == std::string::npos || c2 == std::string::npos) throw InputError("--sweep must look like path=lo:hi:n");
  try {
    w.lo = std::stod(rest.substr(0, c1));
    w.hi = std::stod(rest.substr(c1 + 1, c2 - c1 - 1));
    const long n = std::stol(rest.substr(c2 + 1));
    if (n < 1) throw InputError("--sweep needs n >= 1");
    w.n = static_cast<std::size_t>(n);
  } catch (const std::logic_error&) {
    throw InputError(fmt::format("--sweep: cannot parse '{}'", s));
  }
  return w;
}

void plot_traces(const fs::path& path, const std::vector<AScan>& traces, const std::string& title) {
  std::vector<svg::Series> series;
  for (const auto& t : traces) {
    svg::Series s{t.label, {}, t.samples};
    for (std::size_t i = 0; i < t.size(); ++i) s.x.push_back(t.time(i) * 1e9);
    series.push_back(std::move(s));
  }
  svg::write(path, svg::line_plot(series, {title, "time (ns)", "amplitude"}));
}

struct SimulateArgs {
  std::string scene, pulse_file, output = "ascan.csv", family, sweep, grid_from;
  std::optional<double> f_c, noise;
  int ppw = 20;
};

int cmd_simulate(const SimulateArgs& a, const Globals& g) {
  const SceneConfig scene = load_scene(a.scene);
  SourcePulse pulse;
  std::optional<InversionConfig> inv;
  if (!a.grid_from.empty()) {
    inv = load_inversion_config(a.grid_from);
    pulse = inv->pulse;
  }
  if (!a.pulse_file.empty()) pulse = load_pulse(a.pulse_file);
  if (!a.family.empty()) pulse.family = parse_pulse_family(a.family);
  if (a.f_c) pulse.f_c = *a.f_c;
  validate(pulse);
  GridOptions opts;
  opts.points_per_wavelength = a.ppw;

  std::optional<std::uint64_t> seed;
  if (a.noise) seed = require_seed(g, std::nullopt);

  const fs::path dir = output_dir(g, std::nullopt, ".");
  fs::create_directories(dir);
  const fs::path out = dir / a.output;

  auto run_one = [&](const LayerStack& stack, const std::string& label) {
    GridSpec grid;
    if (inv) {
      grid = inversion_grid(inv->scene.stack, inv->scene.space, pulse, inv->grid);
    } else {
      grid = discretize(stack, pulse, opts);
    }
    AScan t = simulate(stack, pulse, grid);
    if (a.noise) t = add_noise(t, *a.noise, *seed);
    t.label = label;
    return t;
  };

  if (a.sweep.empty()) {
    const AScan t = run_one(scene.stack, "simulated");
    write_ascan_csv(out, t);
    plot_traces(fs::path(out).replace_extension(".svg"), {t}, "Simulated A-scan");
    spdlog::info("wrote {} ({} samples, dt = {:.4g} s)", out.string(), t.size(), t.dt);
    return kExitOk;
  }

  const Sweep sw = parse_sweep(a.sweep);
  const FieldPath path = resolve_path(sw.path, scene.stack);
  std::vector<AScan> traces;
  for (std::size_t k = 0; k < sw.n; ++k) {
    const double v = sw.n == 1 ? sw.lo : sw.lo + (sw.hi - sw.lo) * static_cast<double>(k) / static_cast<double>(sw.n - 1);
    LayerStack s = scene.stack;
    write_field(s, path, v);
    if (const auto problems = validate(s); !problems.empty()) {
      throw InputError(fmt::format("--sweep value {} gives an invalid stack: {}", v, problems.front()));
    }
    traces.push_back(run_one(s, fmt::format("{} = {:.4g}", sw.path, v)));
    const fs::path file = dir / fmt::format("{}_{}{}", out.stem().string(), k, out.extension().string());
    write_ascan_csv(file, traces.back());
    spdlog::info("wrote {} ({} = {:.6g})", file.string(), sw.path, v);
  }
  plot_traces(dir / fmt::format("{}_sweep.svg", out.stem().string()), traces, fmt::format("Sweep over {}", sw.path));
  return kExitOk;
}

struct CalibrateArgs {
  std::string manifest, band, families;
  std::optional<std::size_t> budget;
};

int cmd_calibrate(const CalibrateArgs& a, const Globals& g, WorkerPool& pool) {
  const CalibrationManifest m = load_calibration_manifest(a.manifest);
  CalibrationOptions opts;
  if (m.f_low) opts.f_low = *m.f_low;
  if (m.f_high) opts.f_high = *m.f_high;
  if (!a.band.empty()) std::tie(opts.f_low, opts.f_high) = parse_range(a.band, "--band");
  if (!(opts.f_low > 0.0) || !(opts.f_low < opts.f_high)) {
    throw InputError(fmt::format("band [{:.4g}, {:.4g}] Hz: need 0 < low < high", opts.f_low, opts.f_high));
  }
  if (!m.families.empty()) opts.families = m.families;
  if (!a.families.empty()) {
    opts.families.clear();
    std::stringstream ss(a.families);
    std::string f;
    while (std::getline(ss, f, ',')) opts.families.push_back(parse_pulse_family(f));
  }
  if (m.budget) opts.bo.budget = *m.budget;
  if (a.budget) opts.bo.budget = *a.budget;
  if (opts.bo.budget <= opts.bo.n_init) {
    throw InputError(fmt::format("budget must exceed the {} initial evaluations", opts.bo.n_init));
  }
  RunOptions run{require_seed(g, std::nullopt), output_dir(g, std::nullopt, "calibration")};
  return run_calibration(m, opts, run, &pool);
}

int cmd_invert(const std::string& config, const std::string& mode, const Globals& g, WorkerPool& pool) {
  const InversionConfig cfg = load_inversion_config(config);
  RunOptions run{require_seed(g, cfg.seed), output_dir(g, cfg.output_dir, "inversion")};
  if (mode == "bo") return run_bo_inversion(cfg, run, &pool);
  return run_mcmc_inversion(cfg, run, &pool);
}

int cmd_envelope(const std::string& in, const std::string& out) {
  AScan env = envelope(read_ascan_csv(in));
  env.label = "envelope";
  write_ascan_csv(out, env);
  return kExitOk;
}

int cmd_topp(const std::optional<double>& eps, const std::optional<double>& vwc) {
  if (eps.has_value() == vwc.has_value()) throw InputError("give either a permittivity or --inverse <vwc>");
  if (eps) {
    const MoistureValue m = topp_vwc(*eps);
    fmt::print("eps_r = {:.6g}  vwc = {:.4f}{}\n", *eps, m.vwc, m.out_of_model ? "  (clamped to [0, 1])" : "");
  } else {
    fmt::print("vwc = {:.6g}  eps_r = {:.6f}\n", *vwc, topp_permittivity(*vwc));
  }
  return kExitOk;
}

int cmd_traveltime(double dt, double depth) {
  const double eps = traveltime_permittivity(dt, depth);
  fmt::print("eps_r = {:.6f}\n", eps);
  return kExitOk;
}

int cmd_diagnose(const std::string& chain_file, double burn_in, const Globals& g) {
  const Chain c = read_chain_csv(chain_file);
  const Diagnostics d = diagnostics(c, burn_in);
  const PosteriorSummary s = summarize(c, burn_in);
  fmt::print("{} walkers x {} steps, burn-in {} steps, acceptance {:.3f}\n", c.n_walkers, c.n_steps, d.burn_in_steps,
             d.acceptance);
  fmt::print("{:<16} {:>12} {:>12} {:>12} {:>12} {:>12} {:>8} {:>10}\n", "parameter", "mean", "sd", "map", "ci95_low",
             "ci95_high", "r_hat", "ess");
  bool converged = true;
  for (std::size_t k = 0; k < c.dim; ++k) {
    const auto& m = s.marginals[k];
    fmt::print("{:<16} {:>12.6g} {:>12.6g} {:>12.6g} {:>12.6g} {:>12.6g} {:>8.4f} {:>10.1f}\n", m.name, m.mean, m.sd,
               m.map, m.ci_low, m.ci_high, d.r_hat[k], d.ess[k]);
    converged = converged && std::isfinite(d.r_hat[k]) && d.r_hat[k] <= 1.05;
  }
  if (g.output_dir) {
    fs::create_directories(*g.output_dir);
    nlohmann::json j = to_json(s);
    j["diagnostics"] = to_json(d, c.names);
    std::ofstream(fs::path(*g.output_dir) / "diagnose.json") << j.dump(2) << "\n";
  }
  if (!converged) {
    fmt::print("NOT-CONVERGED\n");
    return kExitNotConverged;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian full-waveform inversion of ground-penetrating radar A-scans"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kVersion));

  Globals g;
  app.add_option("--seed", g.seed, "Random seed (required by stochastic commands)");
  app.add_option("--workers", g.workers, "Worker threads for forward evaluations (0 = all cores)");
  app.add_option("--output-dir", g.output_dir, "Directory for results");
  app.add_flag("-v,--verbose", g.verbose, "Debug logging");

  SimulateArgs sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "Run the FDTD forward model for a scene");
  simulate_cmd->add_option("--scene", sim.scene, "Scene JSON")->required()->check(CLI::ExistingFile);
  simulate_cmd->add_option("--pulse", sim.pulse_file, "Pulse JSON {family, f_c_hz, amplitude, delay_s}")
      ->check(CLI::ExistingFile);
  simulate_cmd->add_option("--family", sim.family, "Pulse family (overrides the pulse file)");
  simulate_cmd->add_option("--fc", sim.f_c, "Center frequency in Hz (overrides the pulse file)");
  simulate_cmd->add_option("-o,--output", sim.output, "Output A-scan CSV (inside --output-dir)");
  simulate_cmd->add_option("--sweep", sim.sweep, "Vary one field: path=lo:hi:n, one trace per value");
  simulate_cmd->add_option("--noise", sim.noise, "Add Gaussian noise, sd as a fraction of the peak envelope");
  simulate_cmd->add_option("--ppw", sim.ppw, "Points per shortest wavelength");
  simulate_cmd->add_option("--grid-from", sim.grid_from, "Use the fixed grid and pulse of an inversion config")
      ->check(CLI::ExistingFile);

  CalibrateArgs cal;
  auto* calibrate_cmd = app.add_subcommand("calibrate", "Fit pulse family and center frequency to reference traces");
  calibrate_cmd->add_option("--manifest", cal.manifest, "Manifest JSON listing trace/scene pairs")
      ->required()
      ->check(CLI::ExistingFile);
  calibrate_cmd->add_option("--band", cal.band, "Frequency band LOW:HIGH in Hz");
  calibrate_cmd->add_option("--budget", cal.budget, "Objective evaluations per family");
  calibrate_cmd->add_option("--families", cal.families, "Comma-separated pulse families");

  std::string config, mode = "bo";
  auto* invert_cmd = app.add_subcommand("invert", "Estimate layer properties from a measured A-scan");
  invert_cmd->add_option("--config", config, "Inversion config JSON")->required()->check(CLI::ExistingFile);
  invert_cmd->add_option("--mode", mode, "bo or mcmc")->check(CLI::IsMember({"bo", "mcmc"}));

  std::string env_in, env_out;
  auto* envelope_cmd = app.add_subcommand("envelope", "Hilbert envelope of an A-scan");
  envelope_cmd->add_option("input", env_in, "Input A-scan CSV")->required()->check(CLI::ExistingFile);
  envelope_cmd->add_option("output", env_out, "Output CSV")->required();

  std::optional<double> topp_eps, topp_vwc_in;
  auto* topp_cmd = app.add_subcommand("topp", "Topp's equation: permittivity to water content or back");
  topp_cmd->add_option("eps", topp_eps, "Relative permittivity");
  topp_cmd->add_option("--inverse", topp_vwc_in, "Volumetric water content to convert to permittivity");

  double tt_dt = 0.0, tt_depth = 0.0;
  auto* traveltime_cmd = app.add_subcommand("traveltime", "Permittivity from a two-way travel time");
  traveltime_cmd->add_option("--dt", tt_dt, "Two-way travel time (s)")->required();
  traveltime_cmd->add_option("--depth", tt_depth, "Layer thickness (m)")->required();

  std::string chain_file;
  double burn_in = 0.5;
  auto* diagnose_cmd = app.add_subcommand("diagnose", "Convergence diagnostics and summary for a chain CSV");
  diagnose_cmd->add_option("chain", chain_file, "Chain CSV")->required()->check(CLI::ExistingFile);
  diagnose_cmd->add_option("--burn-in", burn_in, "Fraction of steps discarded");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  auto logger = spdlog::stderr_color_mt("gprinv");
  spdlog::set_default_logger(logger);
  spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    WorkerPool pool(g.workers);
    if (*simulate_cmd) return cmd_simulate(sim, g);
    if (*calibrate_cmd) return cmd_calibrate(cal, g, pool);
    if (*invert_cmd) return cmd_invert(config, mode, g, pool);
    if (*envelope_cmd) return cmd_envelope(env_in, env_out);
    if (*topp_cmd) return cmd_topp(topp_eps, topp_vwc_in);
    if (*traveltime_cmd) return cmd_traveltime(tt_dt, tt_depth);
    if (*diagnose_cmd) return cmd_diagnose(chain_file, burn_in, g);
  } catch (const InputError& e) {
    spdlog::error("{}", e.what());
    return kExitInput;
  } catch (const NumericalError& e) {
    spdlog::error("numerical failure: {}", e.what());
    return kExitNumerical;
  } catch (const nlohmann::json::exception& e) {
    spdlog::error("{}", e.what());
    return kExitInput;
  } catch (const std::filesystem::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return kExitInput;
  }
  return kExitInput;
}
