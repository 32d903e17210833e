#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gprinv/error.hpp"
#include "gprinv/executor.hpp"
#include "gprinv/workflow.hpp"

using namespace gprinv;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Workspace {
  fs::path dir;
  explicit Workspace(const std::string& name) : dir(fs::temp_directory_path() / name) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }
  void write(const std::string& name, const json& j) const { std::ofstream(dir / name) << j.dump(2); }
};

json soil_scene() {
  return json::parse(R"({
    "air_gap_m": 0.10,
    "layers": [{"name": "soil", "thickness_m": 0.15, "eps_r": 9.0, "sigma_s_per_m": 0.005}],
    "termination": "pec",
    "parameters": [{"name": "eps1", "path": "soil.eps_r", "low": 2, "high": 20, "topp": true}]
  })");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes scene.json and a synthetic measurement generated on the inversion grid.
InversionConfig synthetic_setup(const Workspace& ws, double noise, std::uint64_t seed) {
  ws.write("scene.json", soil_scene());
  json cfg{{"scene", "scene.json"},
           {"measurement", "meas.csv"},
           {"seed", seed},
           {"grid", {{"points_per_wavelength", 12}}},
           {"bo", {{"budget", 18}, {"n_init", 6}}},
           {"mcmc", {{"walkers", 6}, {"steps", 60}, {"init", "bo"}}}};
  ws.write("inv.json", cfg);
  const InversionConfig c = parse_inversion_config(cfg, ws.dir);
  const GridSpec grid = inversion_grid(c.scene.stack, c.scene.space, c.pulse, c.grid);
  AScan m = simulate(c.scene.stack, c.pulse, grid);
  if (noise > 0.0) m = add_noise(m, noise, seed + 17);
  write_ascan_csv(ws.dir / "meas.csv", m);
  return c;
}

}  // namespace

TEST_CASE("pulse files") {
  const SourcePulse p = parse_pulse(json{{"family", "ricker"}, {"f_c_hz", 1.2e9}});
  CHECK(p.family == PulseFamily::Ricker);
  CHECK(p.f_c == 1.2e9);
  CHECK(p.amplitude == 1.0);
  CHECK_FALSE(p.delay.has_value());
  const SourcePulse q = parse_pulse(to_json(SourcePulse{PulseFamily::Gaussian, 2e9, 0.5, 1e-9}));
  CHECK(q.f_c == 2e9);
  CHECK(q.amplitude == 0.5);
  CHECK(*q.delay == 1e-9);
  CHECK_THROWS_AS(parse_pulse(json{{"family", "ricker"}, {"f_c_hz", 1e9}, {"phase", 0}}), InputError);
  CHECK_THROWS_AS(parse_pulse(json{{"family", "square"}, {"f_c_hz", 1e9}}), InputError);
}

TEST_CASE("inversion config parsing") {
  Workspace ws("gprinv_cfg_test");
  ws.write("scene.json", soil_scene());
  const json base{{"scene", "scene.json"}, {"measurement", "meas.csv"}, {"seed", 4}};
  const InversionConfig c = parse_inversion_config(base, ws.dir);
  CHECK(c.seed == 4u);
  CHECK(c.comparison.domain == CompareDomain::Raw);
  CHECK(c.comparison.alignment == Alignment::Peak);
  CHECK(c.noise_fraction == 0.02);
  CHECK(c.mcmc.walkers == 17);
  CHECK(c.pulse.f_c == 1.579e9);
  CHECK(c.measurement == ws.dir / "meas.csv");
  CHECK_FALSE(c.grid.subcell);
  CHECK(c.mcmc.polish == 200);
  json tuned = base;
  tuned["grid"] = {{"subcell", true}};
  tuned["mcmc"] = {{"polish", 0}};
  const InversionConfig t = parse_inversion_config(tuned, ws.dir);
  CHECK(t.grid.subcell);
  CHECK(t.mcmc.polish == 0);

  json unseeded = base;
  unseeded.erase("seed");
  CHECK_FALSE(parse_inversion_config(unseeded, ws.dir).seed.has_value());

  for (const char* bad : {R"({"colour": 1})", R"({"comparison": {"domain": "spectrum"}})",
                          R"({"comparison": {"window_s": [2e-9, 1e-9]}})", R"({"noise": {"sigma": -1}})",
                          R"({"noise": {"sigma": 0.1, "fraction_of_peak": 0.1}})", R"({"mcmc": {"burn_in": 1.0}})",
                          R"({"mcmc": {"init": "random"}})", R"({"seed": -3})", R"({"grid": {"ppw": 10}})",
                          R"({"grid": {"subcell": "yes"}})", R"({"mcmc": {"polish": -1}})"}) {
    json j = base;
    j.merge_patch(json::parse(bad));
    CAPTURE(bad);
    CHECK_THROWS_AS(parse_inversion_config(j, ws.dir), InputError);
  }
  json inline_scene = base;
  inline_scene["scene"] = soil_scene();
  CHECK(parse_inversion_config(inline_scene, ws.dir).scene.space.dim() == 1);
}

TEST_CASE("inversion grid covers the whole parameter box") {
  const SceneConfig sc = parse_scene(soil_scene());
  const SourcePulse p;
  const GridSpec g = inversion_grid(sc.stack, sc.space, p, GridOptions{});
  LayerStack densest = sc.stack;
  densest.layers[0].eps_r = 20.0;
  CHECK(g.dx == doctest::Approx(discretize(densest, p).dx));
  CHECK(g.n_steps >= discretize(densest, p).n_steps);
  for (double eps : {2.0, 9.0, 20.0}) {
    LayerStack s = sc.stack;
    s.layers[0].eps_r = eps;
    CHECK_NOTHROW(simulate(s, p, g));
  }
}

TEST_CASE("inversion grid checks a balanced layer at its thinnest") {
  json scene = json::parse(R"({
    "air_gap_m": 0.10,
    "layers": [{"name": "organic", "thickness_m": 0.10, "eps_r": 2.5},
               {"name": "soil", "thickness_m": 0.15, "eps_r": 9.0}],
    "parameters": [{"name": "d2", "path": "organic.thickness", "low": 0.03, "high": 0.2,
                    "balance": "soil.thickness"}]
  })");
  const SourcePulse p;
  CHECK_NOTHROW(inversion_grid(parse_scene(scene).stack, parse_scene(scene).space, p, GridOptions{}));
  // At d2 = 0.249 the soil keeps 1 mm, under four cells.
  scene["parameters"][0]["high"] = 0.249;
  const SceneConfig sc = parse_scene(scene);
  CHECK_THROWS_AS(inversion_grid(sc.stack, sc.space, p, GridOptions{}), InputError);
}

TEST_CASE("conform_trace") {
  const AScan a{2.0, 5.0, {0.0, 2.0, 4.0, 6.0}, ""};
  const AScan c = conform_trace(a, 1.0, 10);
  CHECK(c.t0 == 0.0);
  CHECK(c.dt == 1.0);
  REQUIRE(c.size() == 10);
  CHECK(c.samples[1] == doctest::Approx(1.0));
  CHECK(c.samples[6] == doctest::Approx(6.0));
  CHECK(c.samples[9] == 0.0);
  CHECK(conform_trace(a, 1.0, 3).size() == 3);
}

TEST_CASE("add_noise is seeded") {
  const AScan a{1e-11, 0.0, std::vector<double>(200, 0.0), ""};
  AScan b = a;
  b.samples[100] = 1.0;
  const AScan n1 = add_noise(b, 0.05, 3);
  const AScan n2 = add_noise(b, 0.05, 3);
  const AScan n3 = add_noise(b, 0.05, 4);
  CHECK(n1.samples == n2.samples);
  CHECK(n1.samples != n3.samples);
  double s2 = 0.0;
  for (std::size_t i = 0; i < 200; ++i) {
    if (i != 100) s2 += n1.samples[i] * n1.samples[i];
  }
  const AScan env = envelope(b);
  const double peak = *std::max_element(env.samples.begin(), env.samples.end());
  CHECK(std::sqrt(s2 / 199.0) == doctest::Approx(0.05 * peak).epsilon(0.25));
  CHECK(add_noise(b, 0.0, 3).samples == b.samples);
}

TEST_CASE("topp reporting") {
  const ToppReport ok = topp_report(10.2);
  CHECK(ok.guard == "ok");
  CHECK(*ok.vwc == doctest::Approx(0.1922).epsilon(1e-3));
  CHECK(ok.eps_r == 10.2);
  CHECK(topp_report(1.6).guard == "clamped");
  const ToppReport out = topp_report(55.0);
  CHECK(out.guard == "outside-validity-range");
  CHECK_FALSE(out.vwc.has_value());
}

TEST_CASE("inversion problem on noiseless data") {
  Workspace ws("gprinv_problem_test");
  const InversionConfig cfg = synthetic_setup(ws, 0.0, 5);
  const InversionProblem p = make_problem(cfg);
  CHECK(p.misfit({9.0}) < 1e-9);
  CHECK(p.misfit({7.0}) > 1.0);
  CHECK(p.log_posterior({9.0}) > p.log_posterior({8.5}));
  CHECK(p.log_posterior({30.0}) == -INFINITY);
  CHECK(p.forward_calls() == 4);
  CHECK(p.forward_failures() == 0);
}

TEST_CASE("bo inversion writes a reproducible report") {
  Workspace ws("gprinv_bo_test");
  const InversionConfig cfg = synthetic_setup(ws, 0.0, 5);
  WorkerPool one(1), three(3);
  REQUIRE(run_bo_inversion(cfg, RunOptions{5, ws.dir / "a"}, &one) == kExitOk);
  REQUIRE(run_bo_inversion(cfg, RunOptions{5, ws.dir / "b"}, &three) == kExitOk);
  for (const char* f : {"report.csv", "history.csv", "best_fit.csv"}) {
    CAPTURE(f);
    CHECK(slurp(ws.dir / "a" / f) == slurp(ws.dir / "b" / f));
  }
  const json r = json::parse(slurp(ws.dir / "a" / "report.json"));
  CHECK(r.at("seed") == 5);
  CHECK(r.at("version") == kVersion);
  CHECK(r.contains("wall_time_s"));
  CHECK(r.contains("config"));
  const std::string csv = slurp(ws.dir / "a" / "report.csv");
  CHECK(csv.find("eps1.vwc_topp") != std::string::npos);
  CHECK(csv.find("eps1.topp_source_eps_r") != std::string::npos);
  CHECK(csv.find("eps1.topp_guard") != std::string::npos);
  CHECK(fs::exists(ws.dir / "a" / "best_fit.svg"));
}

TEST_CASE("short mcmc run is flagged but still persisted") {
  Workspace ws("gprinv_mcmc_test");
  const InversionConfig cfg = synthetic_setup(ws, 0.02, 6);
  WorkerPool pool(1);
  const int code = run_mcmc_inversion(cfg, RunOptions{6, ws.dir / "out"}, &pool);
  CHECK((code == kExitOk || code == kExitNotConverged));
  for (const char* f : {"chain.csv", "summary.json", "report.csv", "report.json", "marginals.csv", "trace_eps1.svg",
                        "hist_eps1.svg"}) {
    CAPTURE(f);
    CHECK(fs::exists(ws.dir / "out" / f));
  }
  const json r = json::parse(slurp(ws.dir / "out" / "report.json"));
  CHECK(r.at("status") == (code == kExitOk ? "CONVERGED" : "NOT-CONVERGED"));
  // The walkers start around the refined estimate, which never fits worse.
  const json& init = r.at("bo_initialization");
  CHECK(init.at("refined_misfit_percent").get<double>() <= init.at("misfit_percent").get<double>());
  CHECK(init.at("refined_theta").size() == 1);
  const Chain c = read_chain_csv(ws.dir / "out" / "chain.csv");
  CHECK(c.n_walkers == 6);
  CHECK(c.n_steps == 60);
}

TEST_CASE("worker pool") {
  WorkerPool pool(3);
  std::vector<int> hits(100, 0);
  pool.parallel_for(100, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
  std::atomic<int> ran{0};
  try {
    pool.parallel_for(50, [&](std::size_t i) {
      ++ran;
      if (i == 7 || i == 30) throw InputError("item " + std::to_string(i));
    });
    FAIL("expected an exception");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()) == "item 7");
  }
  CHECK(ran == 50);
  std::vector<int> inline_hits(10, 0);
  for_each_index(nullptr, 10, [&](std::size_t i) { inline_hits[i] = static_cast<int>(i); });
  CHECK(inline_hits[9] == 9);
}
