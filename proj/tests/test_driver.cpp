#include <doctest.h>

#include <fstream>
#include <sstream>

#include "ehm/driver.hpp"
#include "ehm/error.hpp"
#include "support.hpp"

using namespace ehm;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

struct Fixture {
  MaterialDB db = test::verification_material();
  Microstructure micro;
  std::shared_ptr<const CoefficientTensorSet> tensors;

  explicit Fixture(int grains = 6, std::uint64_t seed = 3,
                   std::vector<double> T = {295.0, 473.0, 700.0, 873.0}) {
    TextureSpec tex;
    tex.beta_fraction = 0.25;
    micro = build_synthetic_rve({5, 5, 5}, grains, seed, tex);
    tensors = std::make_shared<const CoefficientTensorSet>(assemble_set(micro, db, T));
  }
};

const char* kProgram = R"(
initial_temperature: 300
output_stride: 2
segments:
  - duration: 60
    increments: 10
    control:
      xx: {strain_rate: 8.33e-5}
  - duration: 30
    increments: 5
    temperature_end: 320
    control:
      11: {strain: 0.0}
      yy: {stress: 0}
)";

}  // namespace

TEST_CASE("program parsing") {
  const LoadProgram p = parse_program(kProgram);
  CHECK(p.initial_temperature == 300.0);
  CHECK(p.reference_temperature() == 300.0);
  CHECK(p.output_stride == 2);
  REQUIRE(p.segments.size() == 2);
  CHECK(p.segments[0].control[0].kind == ComponentControl::Kind::StrainRate);
  CHECK(p.segments[0].control[0].value == 8.33e-5);
  CHECK(p.segments[0].control[1].kind == ComponentControl::Kind::Stress);
  CHECK(p.segments[1].temperature_end == 320.0);
  CHECK(p.segments[1].control[0].kind == ComponentControl::Kind::Strain);

  CHECK_THROWS_AS(parse_program("segments: []\n"), Error);
  CHECK_THROWS_AS(parse_program("segments:\n  - duration: 1\n    increments: 1\n    control: {qq: {strain: 1}}\n"),
                  Error);
  CHECK(parse_program("thermal_reference: 280\nsegments:\n  - {duration: 1, increments: 1}\n")
            .reference_temperature() == 280.0);
}

TEST_CASE("history and snapshot round trips") {
  const Fixture f(3, 1);
  const EhmModel model(f.micro, f.db, f.tensors);
  const auto res = run_program(parse_program(kProgram), model);
  // 15 increments at stride 2 plus the initial and the final row.
  CHECK(res.history.size() == 9);
  CHECK(res.history.back().T == 320.0);

  const auto dir = test::scratch_dir("history");
  write_history(dir / "h.csv", res.history);
  const auto back = read_history(dir / "h.csv");
  REQUIRE(back.size() == res.history.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].time == res.history[i].time);
    CHECK(back[i].sigma_bar == res.history[i].sigma_bar);
    CHECK(back[i].eps_bar == res.history[i].eps_bar);
    CHECK(back[i].eps_eqp == res.history[i].eps_eqp);
  }
  CHECK(slurp(dir / "h.csv").rfind("time,T,eps_11", 0) == 0);

  std::string id;
  const PointState s = parse_snapshot(snapshot_json(res.final_state, "p7"), &id);
  CHECK(id == "p7");
  CHECK(s.sigma_bar == res.final_state.sigma_bar);
  CHECK(s.T == res.final_state.T);
  REQUIRE(s.parts.size() == res.final_state.parts.size());
  for (std::size_t a = 0; a < s.parts.size(); ++a) {
    CHECK(s.parts[a].mu == res.final_state.parts[a].mu);
    CHECK(s.parts[a].slip.rho_fwd == res.final_state.parts[a].slip.rho_fwd);
    CHECK(s.parts[a].slip.last_sign == res.final_state.parts[a].slip.last_sign);
    CHECK(s.parts[a].slip.rho_deb == res.final_state.parts[a].slip.rho_deb);
  }
}

TEST_CASE("flow stress falls with temperature and rises with rate") {
  const Fixture f;
  const EhmModel model(f.micro, f.db, f.tensors);
  auto at = [&](double T, double rate, double strain) {
    const auto h = run_program(uniaxial_tension(T, rate, 0.012, 48), model).history;
    return stress_at_strain(h, strain);
  };
  CHECK(at(700.0, 8.33e-5, 0.01) < at(298.0, 8.33e-5, 0.01));
  CHECK(at(298.0, 0.01, 0.0025) > at(298.0, 8.33e-5, 0.0025) - 1e-9);
  CHECK(at(298.0, 0.01, 0.01) > at(298.0, 8.33e-5, 0.01));
}

TEST_CASE("batch: determinism, parallel safety, resume, temperature trend") {
  const Fixture f(5, 4, {295.0, 400.0});
  const auto dir = test::scratch_dir("batch");
  write_rve(dir / "r.rve", f.micro);
  write_cache(dir / "r.ehmc", *f.tensors);
  spit(dir / "material.yaml", slurp(test::data_dir() / "verification.yaml"));
  spit(dir / "p.yaml",
       "initial_temperature: 300\nsnapshot_stride: 5\nsegments:\n  - duration: 120\n"
       "    increments: 15\n    control:\n      xx: {strain_rate: 8.33e-5}\n");
  std::string spec = "rve: r.rve\ncache: r.ehmc\nmaterial: material.yaml\nprogram: p.yaml\npoints:\n";
  for (int i = 0; i < 6; ++i)
    spec += "  - {id: pt" + std::to_string(i) + ", temperature: " + std::to_string(300 + 17 * i) +
            "}\n";
  spec += "  - {id: twin_a, temperature: 340}\n  - {id: twin_b, temperature: 340}\n";
  spit(dir / "batch.yaml", spec);

  const BatchSpec b = load_batch(dir / "batch.yaml");
  REQUIRE(b.points.size() == 8);

  const auto rows1 = run_batch(b, 1, dir / "out1");
  const auto rows4 = run_batch(b, 4, dir / "out4");
  CHECK(slurp(dir / "out1" / "summary.csv") == slurp(dir / "out4" / "summary.csv"));
  for (const auto& r : rows1) {
    CHECK(r.ok);
    CHECK(slurp(dir / "out1" / r.id / "history.csv") == slurp(dir / "out4" / r.id / "history.csv"));
    CHECK(slurp(dir / "out1" / r.id / "final.json") == slurp(dir / "out4" / r.id / "final.json"));
  }
  CHECK(fs::exists(dir / "out1" / "pt0" / "snapshot_000005.json"));
  CHECK(slurp(dir / "out1" / "twin_a" / "history.csv") ==
        slurp(dir / "out1" / "twin_b" / "history.csv"));

  // Softening material: higher temperature, lower stress at equal strain.
  for (int i = 1; i < 6; ++i) CHECK(rows1[i].sigma_vm < rows1[i - 1].sigma_vm);

  // Completed points are not recomputed.
  fs::remove(dir / "out1" / "pt2" / "history.csv");
  fs::remove(dir / "out1" / "pt3" / "DONE");
  const auto again = run_batch(b, 2, dir / "out1");
  CHECK_FALSE(fs::exists(dir / "out1" / "pt2" / "history.csv"));
  CHECK(fs::exists(dir / "out1" / "pt3" / "DONE"));
  CHECK(slurp(dir / "out1" / "summary.csv") == slurp(dir / "out4" / "summary.csv"));

  // Duplicate identifiers are rejected.
  spit(dir / "dup.yaml", "rve: r.rve\ncache: r.ehmc\nprogram: p.yaml\npoints:\n  - {id: a}\n  - {id: a}\n");
  CHECK_THROWS_AS(load_batch(dir / "dup.yaml"), Error);
}

TEST_CASE("a failing point does not stop the batch") {
  const Fixture f(3, 5, {295.0, 400.0});
  const auto dir = test::scratch_dir("batch_fail");
  write_rve(dir / "r.rve", f.micro);
  write_cache(dir / "r.ehmc", *f.tensors);
  spit(dir / "material.yaml", slurp(test::data_dir() / "verification.yaml"));
  spit(dir / "p.yaml", "segments:\n  - duration: 10\n    increments: 2\n    control:\n"
                       "      xx: {strain_rate: 1e-4}\n");
  spit(dir / "b.yaml", "rve: r.rve\ncache: r.ehmc\nmaterial: material.yaml\nprogram: p.yaml\n"
                       "points:\n  - {id: cold, temperature: 100}\n  - {id: ok, temperature: 300}\n");
  const auto rows = run_batch(load_batch(dir / "b.yaml"), 2, dir / "out");
  CHECK_FALSE(rows[0].ok);
  CHECK(rows[1].ok);
  CHECK(fs::exists(dir / "out" / "cold" / "error.txt"));
}

TEST_CASE("calibration harness basics") {
  const Fixture f(4, 6, {295.0, 700.0});
  ExperimentCurve exp;
  exp.temperature = 298.0;
  exp.strain_rate = 8.33e-5;
  for (int i = 1; i <= 10; ++i) exp.strain.push_back(1e-3 * i);
  exp.stress.assign(exp.strain.size(), 0.0);
  const auto sim = simulate_test(f.micro, f.db, f.tensors, exp, 40);
  for (std::size_t i = 0; i < exp.strain.size(); ++i) exp.stress[i] = stress_at_strain(sim, exp.strain[i]);

  CHECK(curve_residual(sim, exp) == 0.0);

  const auto r = calibrate(f.micro, f.db, f.tensors, {exp}, {}, {});
  CHECK(r.residual == 0.0);
  CHECK(r.evaluations == 1);
  CHECK(r.parameters.empty());

  CHECK_THROWS_AS(calibrate(f.micro, f.db, f.tensors, {exp}, {"k1.basal"}, {}), Error);
  try {
    calibrate(f.micro, f.db, f.tensors, {exp}, {"k1.basal"}, {{"k1.basal", {2.0, 1.0}}});
    FAIL("expected InfeasibleBounds");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InfeasibleBounds);
  }

  const auto dir = test::scratch_dir("experiment");
  exp.name = "t298";
  write_experiment(dir / "t298.csv", exp);
  const ExperimentCurve back = read_experiment(dir / "t298.csv");
  CHECK(back.temperature == exp.temperature);
  CHECK(back.strain_rate == exp.strain_rate);
  CHECK(back.strain == exp.strain);
  CHECK(back.stress == exp.stress);
  spit(dir / "bad.csv", "strain,stress\n0.01,1\n0.005,2\n");
  CHECK_THROWS_AS(read_experiment(dir / "bad.csv"), Error);
}
