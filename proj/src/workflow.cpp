#include "gprinv/workflow.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

#include "gprinv/constants.hpp"
#include "gprinv/error.hpp"
#include "gprinv/petro.hpp"
#include "gprinv/svg.hpp"
#include "nelder_mead.hpp"

namespace gprinv {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw InputError(fmt::format("{}: expected an object", where));
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
      throw InputError(fmt::format("{}: unknown key '{}'", where, key));
    }
  }
}

double get_number(const json& j, const char* key, const std::string& where) {
  if (!j.at(key).is_number()) throw InputError(fmt::format("{}: '{}' must be a number", where, key));
  return j.at(key).get<double>();
}

std::size_t get_count(const json& j, const char* key, const std::string& where) {
  if (!j.at(key).is_number_integer() || j.at(key).get<long long>() < 0) {
    throw InputError(fmt::format("{}: '{}' must be a non-negative integer", where, key));
  }
  return j.at(key).get<std::size_t>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InputError(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string safe_name(const std::string& s) {
  std::string out;
  for (char ch : s) out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_') ? ch : '_';
  return out;
}

// Key/value report, written in insertion order.
struct Report {
  std::vector<std::pair<std::string, std::string>> rows;
  void add(const std::string& k, const std::string& v) { rows.emplace_back(k, v); }
  void add(const std::string& k, double v) { rows.emplace_back(k, num(v)); }
  std::string csv() const {
    std::string s = "key,value\n";
    for (const auto& [k, v] : rows) s += k + "," + v + "\n";
    return s;
  }
};

void add_topp(Report& r, json& j, const ParameterEntry& e, double eps) {
  if (!e.topp) return;
  const ToppReport t = topp_report(eps);
  r.add(e.name + ".topp_source_eps_r", eps);
  r.add(e.name + ".topp_guard", t.guard);
  r.add(e.name + ".vwc_topp", t.vwc ? num(*t.vwc) : std::string("NA"));
  j[e.name] = {{"source_eps_r", eps}, {"guard", t.guard}, {"vwc", t.vwc ? json(*t.vwc) : json(nullptr)}};
}

json config_echo(const InversionConfig& cfg, std::uint64_t seed) {
  json j = cfg.echo;
  j["seed"] = seed;
  return j;
}

void write_fit(const fs::path& dir, const InversionProblem& p, const ParameterVector& theta, const std::string& title) {
  AScan sim;
  try {
    sim = p.forward(theta);
  } catch (const Error& e) {
    spdlog::warn("could not simulate the estimate for plotting: {}", e.what());
    return;
  }
  const auto pair = prepare_comparison(p.measured(), sim, {CompareDomain::Raw, std::nullopt, p.comparison().alignment});
  std::string csv = "time_s,measured,simulated\n";
  svg::Series m{"measured", {}, {}}, s{"simulated", {}, {}};
  for (std::size_t i = 0; i < pair.y.size(); ++i) {
    const double t = p.measured().time(i);
    csv += fmt::format("{},{},{}\n", num(t), num(pair.y[i]), num(pair.y_sim[i]));
    m.x.push_back(t * 1e9);
    m.y.push_back(pair.y[i]);
    s.x.push_back(t * 1e9);
    s.y.push_back(pair.y_sim[i]);
  }
  write_text(dir / "best_fit.csv", csv);
  svg::write(dir / "best_fit.svg", svg::line_plot({m, s}, {title, "time (ns)", "amplitude"}));
}

std::vector<PulseFamily> parse_families(const json& arr, const std::string& where) {
  if (!arr.is_array()) throw InputError(where + ": 'families' must be an array");
  std::vector<PulseFamily> out;
  for (const auto& f : arr) {
    if (!f.is_string()) throw InputError(where + ": family names must be strings");
    out.push_back(parse_pulse_family(f.get<std::string>()));
  }
  return out;
}

bool forward_storm(const InversionProblem& p) {
  const std::size_t calls = p.forward_calls();
  const std::size_t failed = p.forward_failures();
  if (calls > 0 && 2 * failed > calls) {
    spdlog::error("{} of {} forward evaluations failed; widen or narrow the parameter bounds, or refine the grid",
                  failed, calls);
    return true;
  }
  return false;
}

}  // namespace

SourcePulse parse_pulse(const json& j) {
  check_keys(j, {"family", "f_c_hz", "amplitude", "delay_s"}, "pulse");
  SourcePulse p;
  if (j.contains("family")) {
    if (!j.at("family").is_string()) throw InputError("pulse: 'family' must be a string");
    p.family = parse_pulse_family(j.at("family").get<std::string>());
  }
  if (j.contains("f_c_hz")) p.f_c = get_number(j, "f_c_hz", "pulse");
  if (j.contains("amplitude")) p.amplitude = get_number(j, "amplitude", "pulse");
  if (j.contains("delay_s") && !j.at("delay_s").is_null()) p.delay = get_number(j, "delay_s", "pulse");
  validate(p);
  return p;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open '{}'", path.string()));
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw InputError(fmt::format("'{}': {}", path.string(), e.what()));
  }
}

SourcePulse load_pulse(const fs::path& path) {
  try {
    return parse_pulse(read_json_file(path));
  } catch (const json::exception& e) {
    throw InputError(fmt::format("'{}': {}", path.string(), e.what()));
  }
}

json to_json(const SourcePulse& p) {
  return {{"family", std::string(to_string(p.family))},
          {"f_c_hz", p.f_c},
          {"amplitude", p.amplitude},
          {"delay_s", p.effective_delay()}};
}

InversionConfig parse_inversion_config(const json& j, const fs::path& base_dir) {
  const std::string where = "config";
  check_keys(j, {"scene", "measurement", "pulse", "comparison", "noise", "grid", "bo", "mcmc", "seed", "output_dir"},
             where);
  InversionConfig cfg;
  cfg.base_dir = base_dir;
  cfg.echo = j;

  if (!j.contains("scene")) throw InputError("config: 'scene' is required");
  if (j.at("scene").is_string()) {
    cfg.scene = load_scene(resolve(base_dir, j.at("scene").get<std::string>()));
  } else {
    cfg.scene = parse_scene(j.at("scene"));
  }

  if (!j.contains("measurement") || !j.at("measurement").is_string()) {
    throw InputError("config: 'measurement' must name an A-scan CSV file");
  }
  cfg.measurement = resolve(base_dir, j.at("measurement").get<std::string>());

  if (j.contains("pulse")) {
    const json& p = j.at("pulse");
    cfg.pulse = p.is_string() ? load_pulse(resolve(base_dir, p.get<std::string>())) : parse_pulse(p);
  }

  if (j.contains("comparison")) {
    const json& c = j.at("comparison");
    check_keys(c, {"domain", "alignment", "window_s"}, "config.comparison");
    if (c.contains("domain")) {
      const auto d = c.at("domain").get<std::string>();
      if (d == "raw") cfg.comparison.domain = CompareDomain::Raw;
      else if (d == "envelope") cfg.comparison.domain = CompareDomain::Envelope;
      else throw InputError("config.comparison.domain must be \"raw\" or \"envelope\"");
    }
    if (c.contains("alignment")) {
      const auto a = c.at("alignment").get<std::string>();
      if (a == "none") cfg.comparison.alignment = Alignment::None;
      else if (a == "peak") cfg.comparison.alignment = Alignment::Peak;
      else throw InputError("config.comparison.alignment must be \"none\" or \"peak\"");
    }
    if (c.contains("window_s")) {
      const json& w = c.at("window_s");
      if (!w.is_array() || w.size() != 2 || !w[0].is_number() || !w[1].is_number()) {
        throw InputError("config.comparison.window_s must be [t_start, t_end]");
      }
      cfg.comparison.window = TimeWindow{w[0].get<double>(), w[1].get<double>()};
      if (!(cfg.comparison.window->t_start < cfg.comparison.window->t_end)) {
        throw InputError("config.comparison.window_s: t_start must precede t_end");
      }
    }
  }

  if (j.contains("noise")) {
    const json& n = j.at("noise");
    check_keys(n, {"sigma", "fraction_of_peak"}, "config.noise");
    if (n.contains("sigma") && n.contains("fraction_of_peak")) {
      throw InputError("config.noise: give either 'sigma' or 'fraction_of_peak'");
    }
    if (n.contains("sigma")) {
      cfg.noise_sigma = get_number(n, "sigma", "config.noise");
      if (!(*cfg.noise_sigma > 0.0)) throw InputError("config.noise.sigma must be positive");
    }
    if (n.contains("fraction_of_peak")) {
      cfg.noise_fraction = get_number(n, "fraction_of_peak", "config.noise");
      if (!(cfg.noise_fraction > 0.0)) throw InputError("config.noise.fraction_of_peak must be positive");
    }
  }

  if (j.contains("grid")) {
    const json& g = j.at("grid");
    check_keys(g, {"points_per_wavelength", "courant", "min_cells_per_layer", "dispersion_match", "subcell"},
               "config.grid");
    if (g.contains("points_per_wavelength")) {
      cfg.grid.points_per_wavelength = static_cast<int>(get_count(g, "points_per_wavelength", "config.grid"));
    }
    if (g.contains("courant")) cfg.grid.courant = get_number(g, "courant", "config.grid");
    if (g.contains("min_cells_per_layer")) {
      cfg.grid.min_cells_per_layer = static_cast<int>(get_count(g, "min_cells_per_layer", "config.grid"));
    }
    if (g.contains("dispersion_match")) cfg.grid.dispersion_match = get_number(g, "dispersion_match", "config.grid");
    if (g.contains("subcell")) {
      if (!g.at("subcell").is_boolean()) throw InputError("config.grid.subcell must be true or false");
      cfg.grid.subcell = g.at("subcell").get<bool>();
    }
  }

  if (j.contains("bo")) {
    const json& b = j.at("bo");
    check_keys(b, {"budget", "n_init", "candidates"}, "config.bo");
    if (b.contains("budget")) cfg.bo.budget = get_count(b, "budget", "config.bo");
    if (b.contains("n_init")) cfg.bo.n_init = get_count(b, "n_init", "config.bo");
    if (b.contains("candidates")) cfg.bo.n_candidates = get_count(b, "candidates", "config.bo");
  }

  if (j.contains("mcmc")) {
    const json& m = j.at("mcmc");
    check_keys(m, {"walkers", "steps", "burn_in", "init", "init_spread", "polish", "r_hat_threshold"}, "config.mcmc");
    if (m.contains("walkers")) cfg.mcmc.walkers = get_count(m, "walkers", "config.mcmc");
    if (m.contains("steps")) cfg.mcmc.steps = get_count(m, "steps", "config.mcmc");
    if (m.contains("burn_in")) cfg.mcmc.burn_in = get_number(m, "burn_in", "config.mcmc");
    if (m.contains("init")) {
      cfg.mcmc.init = m.at("init").get<std::string>();
      if (cfg.mcmc.init != "prior" && cfg.mcmc.init != "bo") {
        throw InputError("config.mcmc.init must be \"prior\" or \"bo\"");
      }
    }
    if (m.contains("polish")) cfg.mcmc.polish = get_count(m, "polish", "config.mcmc");
    if (m.contains("init_spread")) cfg.mcmc.init_spread = get_number(m, "init_spread", "config.mcmc");
    if (m.contains("r_hat_threshold")) cfg.mcmc.r_hat_threshold = get_number(m, "r_hat_threshold", "config.mcmc");
    if (!(cfg.mcmc.burn_in >= 0.0 && cfg.mcmc.burn_in < 1.0)) throw InputError("config.mcmc.burn_in must lie in [0, 1)");
    if (!(cfg.mcmc.init_spread > 0.0 && cfg.mcmc.init_spread <= 0.5)) {
      throw InputError("config.mcmc.init_spread must lie in (0, 0.5]");
    }
  }

  if (j.contains("seed")) {
    const json& sd = j.at("seed");
    if (!sd.is_number_integer() || (!sd.is_number_unsigned() && sd.get<std::int64_t>() < 0)) {
      throw InputError("config: 'seed' must be a non-negative integer");
    }
    cfg.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("output_dir")) cfg.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
  return cfg;
}

InversionConfig load_inversion_config(const fs::path& path) {
  const json j = read_json_file(path);
  try {
    return parse_inversion_config(j, path.parent_path());
  } catch (const json::exception& e) {
    throw InputError(fmt::format("'{}': {}", path.string(), e.what()));
  }
}

GridSpec inversion_grid(const LayerStack& stack, const ParameterSpace& space, const SourcePulse& pulse,
                        const GridOptions& opts) {
  LayerStack hi = stack, lo = stack;
  double hs_eps_min = 0.0;
  if (const auto* hs = std::get_if<HalfSpace>(&stack.termination)) hs_eps_min = hs->eps_r;
  for (std::size_t i = 0; i < space.dim(); ++i) {
    const FieldPath& f = space.field(i);
    if (f.field == FieldKind::Sigma) continue;
    // Balances are left out of `hi`: it only has to bound depth and travel time.
    write_field(hi, f, space[i].high);
    write_field(lo, f, space[i].low);
    if (const auto& b = space.balance(i)) {
      write_field(lo, *b, read_field(lo, *b) - (space[i].high - read_field(stack, f)));
    }
    if (f.target == FieldPath::Target::HalfSpace && f.field == FieldKind::EpsR) hs_eps_min = space[i].low;
  }
  GridSpec g = discretize(hi, pulse, opts);

  // Thinnest admissible layers must still resolve on this grid.
  const LayerStack lo_snapped = snap(lo, g.dx);
  for (std::size_t i = 0; i < lo.layers.size(); ++i) {
    const long cells = std::lround(lo_snapped.layers[i].thickness / g.dx);
    if (cells < opts.min_cells_per_layer) {
      throw InputError(fmt::format("layer {}{} at its lower thickness bound spans {} cells at dx = {:.4g} m, need {}", i,
                                   lo.layers[i].name.empty() ? "" : " (" + lo.layers[i].name + ")", cells, g.dx,
                                   opts.min_cells_per_layer));
    }
  }
  if (!stack.ends_in_conductor()) {
    double depth = hi.air_gap;
    for (const auto& l : hi.layers) depth += l.thickness;
    const auto last = static_cast<std::size_t>(std::lround(depth / g.dx)) + kTopPadding;
    const double travel = static_cast<double>(g.n_steps) * g.dt * constants::kSpeedOfLight / std::sqrt(hs_eps_min);
    g.n_cells = last + static_cast<std::size_t>(std::ceil(0.5 * travel / g.dx)) + kTopPadding;
  }
  g.snapped = snap(stack, g.dx, opts.subcell);
  return g;
}

AScan conform_trace(const AScan& a, double dt, std::size_t n) {
  validate(a);
  AScan out = std::abs(a.dt - dt) > 1e-9 * dt ? resample(a, dt) : a;
  if (out.t0 != 0.0) spdlog::warn("trace '{}' starts at t0 = {:.4g} s; its time axis is restarted at 0", a.label, a.t0);
  out.t0 = 0.0;
  out.dt = dt;
  out.samples.resize(n, 0.0);
  return out;
}

InversionProblem::InversionProblem(LayerStack stack, ParameterSpace space, SourcePulse pulse, const GridOptions& grid,
                                   const AScan& measured, ComparisonConfig comparison, std::optional<NoiseModel> noise,
                                   double noise_fraction)
    : stack_(std::move(stack)), space_(std::move(space)), pulse_(pulse), comparison_(comparison) {
  if (space_.dim() == 0) throw InputError("the scene declares no parameters to invert");
  grid_ = inversion_grid(stack_, space_, pulse_, grid);
  measured_ = conform_trace(measured, grid_.dt, grid_.n_steps);
  if (comparison_.window) {
    // Validate once so that a bad window is a configuration error, not a forward failure.
    (void)window(measured_, comparison_.window->t_start, comparison_.window->t_end);
  }
  noise_ = noise ? *noise : default_noise(measured_, comparison_, noise_fraction);
  if (!(noise_.sigma_noise > 0.0)) throw InputError("noise sigma must be positive");
}

AScan InversionProblem::forward(const ParameterVector& theta) const {
  ++calls_;
  return simulate(build_scene(stack_, space_, theta), pulse_, grid_);
}

double InversionProblem::misfit(const ParameterVector& theta) const {
  AScan sim;
  try {
    sim = forward(theta);
  } catch (const Error& e) {
    ++failures_;
    spdlog::warn("forward model failed at [{}]: {}", fmt::join(theta, ", "), e.what());
    return std::numeric_limits<double>::quiet_NaN();
  }
  return relative_error(measured_, sim, comparison_);
}

double InversionProblem::log_posterior(const ParameterVector& theta) const {
  const auto fwd = [this](const ParameterVector& t) { return forward(t); };
  const PosteriorValue v = evaluate_log_posterior(theta, measured_, fwd, space_, noise_, comparison_);
  if (v.forward_failed) ++failures_;
  return v.value;
}

InversionProblem make_problem(const InversionConfig& cfg) {
  std::optional<NoiseModel> noise;
  if (cfg.noise_sigma) noise = NoiseModel{*cfg.noise_sigma};
  return InversionProblem(cfg.scene.stack, cfg.scene.space, cfg.pulse, cfg.grid, read_ascan_csv(cfg.measurement),
                          cfg.comparison, noise, cfg.noise_fraction);
}

AScan add_noise(const AScan& a, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0)) throw InputError("noise fraction must be non-negative");
  const AScan env = envelope(a);
  const double peak = *std::max_element(env.samples.begin(), env.samples.end());
  std::seed_seq seq{seed, std::uint64_t{0x6e6f697365}};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> n(0.0, 1.0);
  AScan out = a;
  for (double& v : out.samples) v += fraction * peak * n(rng);
  return out;
}

ToppReport topp_report(double eps_r) {
  ToppReport t;
  t.eps_r = eps_r;
  if (eps_r < kToppEpsMin || eps_r > kToppEpsMax) {
    t.guard = "outside-validity-range";
    return t;
  }
  const MoistureValue m = topp_vwc(eps_r);
  t.vwc = m.vwc;
  t.guard = m.out_of_model ? "clamped" : "ok";
  return t;
}

int run_bo_inversion(const InversionConfig& cfg, const RunOptions& run, WorkerPool* pool) {
  const auto start = std::chrono::steady_clock::now();
  const InversionProblem p = make_problem(cfg);
  fs::create_directories(run.output_dir);
  spdlog::info("bo inversion: {} parameters, grid dx = {:.4g} m, dt = {:.4g} s, {} steps", p.space().dim(),
               p.grid().dx, p.grid().dt, p.grid().n_steps);

  BOOptions bo = cfg.bo;
  bo.seed = run.seed;
  const BOResult res = minimize([&](const ParameterVector& x) { return p.misfit(x); }, p.space(), bo, pool);

  const auto names = p.space().names();
  std::string hist = fmt::format("evaluation,{},relative_error_percent,penalized\n", fmt::join(names, ","));
  for (std::size_t i = 0; i < res.history.size(); ++i) {
    const auto& e = res.history[i];
    std::vector<std::string> vals;
    for (double v : e.theta) vals.push_back(num(v));
    hist += fmt::format("{},{},{},{}\n", i, fmt::join(vals, ","), num(e.value), e.penalized ? 1 : 0);
  }
  write_text(run.output_dir / "history.csv", hist);
  write_fit(run.output_dir, p, res.best_theta, "Bayesian optimization estimate");

  const bool storm = forward_storm(p);
  Report r;
  json moisture = json::object();
  r.add("version", kVersion);
  r.add("mode", "bo");
  r.add("seed", std::to_string(run.seed));
  r.add("status", storm ? "NUMERICAL-FAILURE" : "OK");
  r.add("evaluations", std::to_string(res.evaluations_used));
  r.add("misfit_percent", res.best_value);
  r.add("noise_sigma", p.noise().sigma_noise);
  json params = json::array();
  for (std::size_t i = 0; i < p.space().dim(); ++i) {
    const auto& e = p.space()[i];
    r.add(e.name + ".estimate", res.best_theta[i]);
    params.push_back({{"name", e.name}, {"path", e.path}, {"unit", e.unit}, {"low", e.low}, {"high", e.high},
                      {"estimate", res.best_theta[i]}});
    if (!e.balance.empty()) params.back()["balance"] = e.balance;
    add_topp(r, moisture, e, res.best_theta[i]);
  }
  write_text(run.output_dir / "report.csv", r.csv());

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json j{{"version", kVersion},
         {"mode", "bo"},
         {"seed", run.seed},
         {"status", storm ? "NUMERICAL-FAILURE" : "OK"},
         {"config", config_echo(cfg, run.seed)},
         {"parameters", params},
         {"misfit_percent", res.best_value},
         {"evaluations", res.evaluations_used},
         {"forward_failures", p.forward_failures()},
         {"noise_sigma", p.noise().sigma_noise},
         {"moisture", moisture},
         {"grid", {{"dx_m", p.grid().dx}, {"dt_s", p.grid().dt}, {"n_steps", p.grid().n_steps}, {"subcell", p.grid().subcell}}},
         {"pulse", to_json(p.pulse())},
         {"wall_time_s", wall}};
  write_json(run.output_dir / "report.json", j);
  spdlog::info("bo inversion: misfit {:.4f}% after {} evaluations", res.best_value, res.evaluations_used);
  return storm ? kExitNumerical : kExitOk;
}

int run_mcmc_inversion(const InversionConfig& cfg, const RunOptions& run, WorkerPool* pool) {
  const auto start = std::chrono::steady_clock::now();
  const InversionProblem p = make_problem(cfg);
  fs::create_directories(run.output_dir);
  const auto& space = p.space();
  const auto names = space.names();
  spdlog::info("mcmc inversion: {} parameters, {} walkers x {} steps, grid dx = {:.4g} m, {} steps per trace",
               space.dim(), cfg.mcmc.walkers, cfg.mcmc.steps, p.grid().dx, p.grid().n_steps);

  SamplerOptions so;
  so.n_walkers = cfg.mcmc.walkers;
  so.n_steps = cfg.mcmc.steps;
  so.seed = run.seed;
  std::optional<BOResult> bo_res;
  ParameterVector centre;
  double centre_misfit = 0.0;
  if (cfg.mcmc.init == "bo") {
    BOOptions bo = cfg.bo;
    bo.seed = run.seed;
    bo_res = minimize([&](const ParameterVector& x) { return p.misfit(x); }, space, bo, pool);
    centre = bo_res->best_theta;
    centre_misfit = bo_res->best_value;
    if (cfg.mcmc.polish > 0) {
      std::vector<double> step(space.dim());
      for (std::size_t k = 0; k < space.dim(); ++k) step[k] = 0.05 * (space[k].high - space[k].low);
      const auto refined = detail::nelder_mead(
          [&](const std::vector<double>& x) {
            return space.contains(x) ? p.misfit(x) : std::numeric_limits<double>::quiet_NaN();
          },
          centre, step, static_cast<int>(cfg.mcmc.polish), 1e-6);
      if (std::isfinite(refined.value) && refined.value < centre_misfit && space.contains(refined.x)) {
        centre = refined.x;
        centre_misfit = refined.value;
      }
      spdlog::info("simplex refinement: misfit {:.4g}% -> {:.4g}%", bo_res->best_value, centre_misfit);
    }
    std::seed_seq seq{run.seed, std::uint64_t{0x696e6974}};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (std::size_t w = 0; w < so.n_walkers; ++w) {
      ParameterVector x(space.dim());
      for (std::size_t k = 0; k < space.dim(); ++k) {
        const double range = space[k].high - space[k].low;
        x[k] = std::clamp(centre[k] + cfg.mcmc.init_spread * range * u(rng), space[k].low, space[k].high);
      }
      so.initial.push_back(std::move(x));
    }
  }

  const Chain chain = sample([&](const ParameterVector& x) { return p.log_posterior(x); }, space, so, pool);
  const Diagnostics diag = diagnostics(chain, cfg.mcmc.burn_in);
  const PosteriorSummary summ = summarize(chain, cfg.mcmc.burn_in);

  bool converged = true;
  for (double r : diag.r_hat) converged = converged && std::isfinite(r) && r <= cfg.mcmc.r_hat_threshold;
  const bool storm = forward_storm(p);
  const std::string status = storm ? "NUMERICAL-FAILURE" : (converged ? "CONVERGED" : "NOT-CONVERGED");

  write_chain_csv(run.output_dir / "chain.csv", chain);
  json summary = to_json(summ);
  summary["diagnostics"] = to_json(diag, names);
  write_json(run.output_dir / "summary.json", summary);

  std::string marg = "parameter,bin_low,bin_high,count\n";
  for (const auto& m : summ.marginals) {
    for (std::size_t b = 0; b < m.histogram.counts.size(); ++b) {
      marg += fmt::format("{},{},{},{}\n", m.name, num(m.histogram.edges[b]), num(m.histogram.edges[b + 1]),
                          m.histogram.counts[b]);
    }
  }
  write_text(run.output_dir / "marginals.csv", marg);

  std::string pairs = "x,y,x_low,x_high,y_low,y_high,count\n";
  for (const auto& pr : summ.pairs) {
    const std::size_t ny = pr.y_edges.size() - 1;
    for (std::size_t a = 0; a + 1 < pr.x_edges.size(); ++a) {
      for (std::size_t b = 0; b < ny; ++b) {
        pairs += fmt::format("{},{},{},{},{},{},{}\n", names[pr.i], names[pr.j], num(pr.x_edges[a]),
                             num(pr.x_edges[a + 1]), num(pr.y_edges[b]), num(pr.y_edges[b + 1]), pr.counts[a * ny + b]);
      }
    }
  }
  write_text(run.output_dir / "pairs.csv", pairs);

  for (std::size_t k = 0; k < space.dim(); ++k) {
    std::vector<svg::Series> series;
    for (std::size_t w = 0; w < chain.n_walkers; ++w) {
      svg::Series s{"", {}, {}};
      for (std::size_t st = 0; st < chain.n_steps; ++st) {
        s.x.push_back(static_cast<double>(st));
        s.y.push_back(chain.value(st, w, k));
      }
      series.push_back(std::move(s));
    }
    const std::string fname = safe_name(names[k]);
    svg::write(run.output_dir / fmt::format("trace_{}.svg", fname),
               svg::line_plot(series, {fmt::format("Walker traces: {}", names[k]), "step", names[k]}));
    const auto& m = summ.marginals[k];
    svg::write(run.output_dir / fmt::format("hist_{}.svg", fname),
               svg::histogram(m.histogram.edges, m.histogram.counts,
                              {fmt::format("Marginal posterior: {} (MAP {:.4g})", names[k], m.map), names[k], "count"},
                              m.map));
  }
  write_fit(run.output_dir, p, summ.joint_map, "Joint MAP estimate");

  Report r;
  json moisture = json::object();
  r.add("version", kVersion);
  r.add("mode", "mcmc");
  r.add("seed", std::to_string(run.seed));
  r.add("status", status);
  r.add("walkers", std::to_string(chain.n_walkers));
  r.add("steps", std::to_string(chain.n_steps));
  r.add("burn_in_steps", std::to_string(diag.burn_in_steps));
  r.add("acceptance", diag.acceptance);
  r.add("noise_sigma", p.noise().sigma_noise);
  r.add("joint_map_log_posterior", summ.joint_map_log_post);
  json params = json::array();
  for (std::size_t k = 0; k < space.dim(); ++k) {
    const auto& e = space[k];
    const auto& m = summ.marginals[k];
    r.add(e.name + ".mean", m.mean);
    r.add(e.name + ".sd", m.sd);
    r.add(e.name + ".map", m.map);
    r.add(e.name + ".ci95_low", m.ci_low);
    r.add(e.name + ".ci95_high", m.ci_high);
    r.add(e.name + ".joint_map", summ.joint_map[k]);
    r.add(e.name + ".r_hat", diag.r_hat[k]);
    r.add(e.name + ".ess", diag.ess[k]);
    params.push_back({{"name", e.name}, {"path", e.path}, {"unit", e.unit}, {"low", e.low}, {"high", e.high},
                      {"mean", m.mean}, {"sd", m.sd}, {"map", m.map}, {"ci95", {m.ci_low, m.ci_high}},
                      {"joint_map", summ.joint_map[k]}});
    if (!e.balance.empty()) params.back()["balance"] = e.balance;
    add_topp(r, moisture, e, m.map);
  }
  write_text(run.output_dir / "report.csv", r.csv());

  double misfit = std::numeric_limits<double>::quiet_NaN();
  try {
    misfit = relative_error(p.measured(), p.forward(summ.joint_map), p.comparison());
  } catch (const Error& e) {
    spdlog::warn("misfit at the joint MAP is unavailable: {}", e.what());
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json j{{"version", kVersion},
         {"mode", "mcmc"},
         {"seed", run.seed},
         {"status", status},
         {"config", config_echo(cfg, run.seed)},
         {"parameters", params},
         {"diagnostics", to_json(diag, names)},
         {"misfit_percent_at_joint_map", std::isfinite(misfit) ? json(misfit) : json(nullptr)},
         {"evaluations", chain.evaluations},
         {"forward_failures", p.forward_failures()},
         {"noise_sigma", p.noise().sigma_noise},
         {"moisture", moisture},
         {"grid", {{"dx_m", p.grid().dx}, {"dt_s", p.grid().dt}, {"n_steps", p.grid().n_steps}, {"subcell", p.grid().subcell}}},
         {"pulse", to_json(p.pulse())},
         {"wall_time_s", wall}};
  if (bo_res) {
    j["bo_initialization"] = {{"best_theta", bo_res->best_theta},
                              {"misfit_percent", bo_res->best_value},
                              {"refined_theta", centre},
                              {"refined_misfit_percent", centre_misfit}};
  }
  write_json(run.output_dir / "report.json", j);

  spdlog::info("mcmc inversion: {} (acceptance {:.3f})", status, diag.acceptance);
  if (storm) return kExitNumerical;
  if (!converged) {
    spdlog::warn("NOT-CONVERGED: split R-hat above {} for at least one parameter", cfg.mcmc.r_hat_threshold);
    return kExitNotConverged;
  }
  return kExitOk;
}

CalibrationManifest load_calibration_manifest(const fs::path& path) {
  const json j = read_json_file(path);
  const fs::path base = path.parent_path();
  CalibrationManifest m;
  try {
    check_keys(j, {"measurements", "band_hz", "budget", "families"}, "manifest");
    if (!j.contains("measurements") || !j.at("measurements").is_array()) {
      throw InputError("manifest: 'measurements' must be an array");
    }
    std::size_t i = 0;
    for (const auto& e : j.at("measurements")) {
      const std::string where = fmt::format("manifest.measurements[{}]", i++);
      check_keys(e, {"trace", "scene"}, where);
      if (!e.contains("trace") || !e.contains("scene")) throw InputError(where + ": needs 'trace' and 'scene'");
      CalibrationMeasurement cm;
      cm.trace = read_ascan_csv(resolve(base, e.at("trace").get<std::string>()));
      cm.stack = load_scene(resolve(base, e.at("scene").get<std::string>())).stack;
      m.measurements.push_back(std::move(cm));
    }
    if (j.contains("band_hz")) {
      const json& b = j.at("band_hz");
      if (!b.is_array() || b.size() != 2) throw InputError("manifest: 'band_hz' must be [low, high]");
      m.f_low = b[0].get<double>();
      m.f_high = b[1].get<double>();
    }
    if (j.contains("budget")) m.budget = get_count(j, "budget", "manifest");
    if (j.contains("families")) m.families = parse_families(j.at("families"), "manifest");
  } catch (const json::exception& e) {
    throw InputError(fmt::format("'{}': {}", path.string(), e.what()));
  }
  if (m.measurements.empty()) throw InputError("manifest lists no measurements");
  return m;
}

int run_calibration(const CalibrationManifest& manifest, const CalibrationOptions& opts, const RunOptions& run,
                    WorkerPool* pool) {
  const auto start = std::chrono::steady_clock::now();
  CalibrationOptions o = opts;
  o.bo.seed = run.seed;
  fs::create_directories(run.output_dir);
  const CalibrationResult res = calibrate_pulse(manifest.measurements, o, pool);

  write_json(run.output_dir / "pulse.json", to_json(res.pulse));
  for (const auto& fc : res.per_family) {
    std::string csv = "evaluation,f_c_hz,misfit_percent,penalized\n";
    for (std::size_t i = 0; i < fc.result.history.size(); ++i) {
      const auto& e = fc.result.history[i];
      csv += fmt::format("{},{},{},{}\n", i, num(e.theta[0]), num(e.value), e.penalized ? 1 : 0);
    }
    write_text(run.output_dir / fmt::format("history_{}.csv", to_string(fc.family)), csv);
  }

  const SourcePulse before{o.families.front(), 0.5 * (o.f_low + o.f_high), 1.0, std::nullopt};
  for (std::size_t i = 0; i < manifest.measurements.size(); ++i) {
    const auto& m = manifest.measurements[i];
    const auto b = compare_for_calibration(m, before, calibration_grid(m.stack, before.family, o));
    const auto a = compare_for_calibration(m, res.pulse, calibration_grid(m.stack, res.pulse.family, o));
    std::string csv = "time_s,measured_envelope,initial_envelope,calibrated_envelope\n";
    svg::Series sm{"measured", {}, {}}, sb{"initial", {}, {}}, sa{"calibrated", {}, {}};
    const std::size_t n = std::min(a.measured_envelope.size(), b.measured_envelope.size());
    for (std::size_t k = 0; k < n; ++k) {
      // The two grids differ only when the families differ; report on the calibrated one.
      const double t = a.measured_envelope.time(k);
      const double bv = k < b.simulated_envelope.size() ? b.simulated_envelope.samples[k] : 0.0;
      csv += fmt::format("{},{},{},{}\n", num(t), num(a.measured_envelope.samples[k]), num(bv),
                         num(a.simulated_envelope.samples[k]));
      sm.x.push_back(t * 1e9);
      sm.y.push_back(a.measured_envelope.samples[k]);
      sb.x.push_back(t * 1e9);
      sb.y.push_back(bv);
      sa.x.push_back(t * 1e9);
      sa.y.push_back(a.simulated_envelope.samples[k]);
    }
    write_text(run.output_dir / fmt::format("overlay_{}.csv", i), csv);
    svg::write(run.output_dir / fmt::format("overlay_{}.svg", i),
               svg::line_plot({sm, sb, sa}, {fmt::format("Envelope overlay, measurement {}", i), "time (ns)",
                                              "envelope"}));
  }

  Report r;
  r.add("version", kVersion);
  r.add("mode", "calibrate");
  r.add("seed", std::to_string(run.seed));
  r.add("family", std::string(to_string(res.pulse.family)));
  r.add("f_c_hz", res.pulse.f_c);
  r.add("misfit_percent", res.misfit);
  json fams = json::array();
  for (const auto& fc : res.per_family) {
    const std::string f(to_string(fc.family));
    r.add(f + ".f_c_hz", fc.result.best_theta[0]);
    r.add(f + ".misfit_percent", fc.result.best_value);
    r.add(f + ".evaluations", std::to_string(fc.result.evaluations_used));
    fams.push_back({{"family", f},
                    {"f_c_hz", fc.result.best_theta[0]},
                    {"misfit_percent", fc.result.best_value},
                    {"evaluations", fc.result.evaluations_used}});
  }
  write_text(run.output_dir / "report.csv", r.csv());
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_json(run.output_dir / "report.json",
             {{"version", kVersion},
              {"mode", "calibrate"},
              {"seed", run.seed},
              {"band_hz", {o.f_low, o.f_high}},
              {"pulse", to_json(res.pulse)},
              {"misfit_percent", res.misfit},
              {"families", fams},
              {"wall_time_s", wall}});
  spdlog::info("calibration: {} at {:.6g} Hz (misfit {:.4f}%)", to_string(res.pulse.family), res.pulse.f_c,
               res.misfit);
  return kExitOk;
}

}  // namespace gprinv
