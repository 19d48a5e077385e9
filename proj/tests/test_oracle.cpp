#include <doctest.h>

#include "ehm/driver.hpp"
#include "ehm/error.hpp"
#include "ehm/oracle.hpp"
#include "support.hpp"

using namespace ehm;

namespace {

IncrementControl strain_only(const Vec6& d, double dt = 1.0) {
  return IncrementControl::strain(d, 0.0, dt);
}

Vec6 sample_strain() {
  Vec6 d;
  d << 2e-4, -5e-5, 7e-5, 3e-5, -4e-5, 1e-4;
  return d;
}

}  // namespace

TEST_CASE("homogeneous elastic patch test") {
  const MaterialDB db = test::verification_material();
  std::mt19937_64 rng(1);
  const GrainRecord g{test::random_euler(rng), Phase::HcpAlpha};
  const auto m = test::single_grain(3, g);
  const FullFieldModel model(m, db);
  const FullFieldState s = model.advance(model.initial_state(298.0), strain_only(sample_strain()));
  const Vec6 expect = CrystalKernel(db, g).stiffness(298.0) * sample_strain();
  const double tol = 1e-10 * expect.cwiseAbs().maxCoeff();
  for (const GaussState& gp : s.gp) CHECK((gp.sigma - expect).cwiseAbs().maxCoeff() < tol);
  CHECK(s.u.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("elastic 2-grain response equals the reduced model") {
  const MaterialDB db = test::verification_material();
  std::mt19937_64 rng(2);
  const auto m = test::two_grain_split(4, {test::random_euler(rng), Phase::HcpAlpha},
                                       {test::random_euler(rng), Phase::BccBeta});
  const FullFieldModel oracle(m, db);
  const EhmModel ehm(m, db,
                     std::make_shared<const CoefficientTensorSet>(assemble_set(m, db, {298.0, 400.0})));
  const auto c = strain_only(sample_strain());
  const FullFieldState a = oracle.advance(oracle.initial_state(298.0), c);
  const PointState b = ehm.advance(ehm.initial_state(298.0), c);
  CHECK((a.sigma_bar - b.sigma_bar).cwiseAbs().maxCoeff() <
        1e-8 * b.sigma_bar.cwiseAbs().maxCoeff());
}

TEST_CASE("reaction stress equals the volume-average stress") {
  const MaterialDB db = test::verification_material();
  TextureSpec tex;
  tex.beta_fraction = 0.3;
  const auto m = build_synthetic_rve({4, 4, 4}, 5, 3, tex);
  const FullFieldModel model(m, db);
  FullFieldState s = model.initial_state(298.0);
  const auto prog = uniaxial_tension(298.0, 8.33e-5, 0.011, 12);
  const auto res = run_program(prog, model);
  const Vec6 r = model.reaction_stress(res.final_state);
  CHECK((r - res.final_state.sigma_bar).cwiseAbs().maxCoeff() <
        1e-8 * res.final_state.sigma_bar.cwiseAbs().maxCoeff());
  for (int k = 1; k < 6; ++k)
    CHECK(std::abs(res.final_state.sigma_bar(k)) < 1e-6 * res.final_state.sigma_bar(0));

  // The per-grain averages combine to the macro stress.
  const auto gs = model.grain_stress(res.final_state);
  const auto C = m.rve.volume_fractions();
  Vec6 avg = Vec6::Zero();
  for (std::size_t g = 0; g < gs.size(); ++g) avg += C[g] * gs[g];
  CHECK((avg - res.final_state.sigma_bar).cwiseAbs().maxCoeff() <
        1e-10 * res.final_state.sigma_bar.cwiseAbs().maxCoeff());
}

TEST_CASE("oracle and reduced model share the crystal kernel") {
  const MaterialDB db = test::verification_material();
  const auto m = build_synthetic_rve({3, 3, 3}, 2, 4);
  const FullFieldModel oracle(m, db);
  const EhmModel ehm(m, db,
                     std::make_shared<const CoefficientTensorSet>(assemble_set(m, db, {298.0, 400.0})));
  Vec6 d = Vec6::Zero();
  d(0) = 1e-4;

  std::uint64_t before = kernel_invocations();
  oracle.advance(oracle.initial_state(298.0), strain_only(d));
  CHECK(kernel_invocations() > before);

  before = kernel_invocations();
  ehm.advance(ehm.initial_state(298.0), strain_only(d));
  CHECK(kernel_invocations() > before);
}

TEST_CASE("element cap") {
  const MaterialDB db = test::verification_material();
  const auto m = build_synthetic_rve({17, 16, 16}, 2, 1);
  try {
    FullFieldModel oracle(m, db);
    FAIL("expected InvalidInput");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidInput);
  }
}

TEST_CASE("Taylor model") {
  const MaterialDB db = test::verification_material();
  std::mt19937_64 rng(5);

  SUBCASE("single grain equals the one-part reduced model") {
    const auto m = test::single_grain(3, {test::random_euler(rng), Phase::HcpAlpha});
    const EhmModel taylor(
        m, db, std::make_shared<const CoefficientTensorSet>(taylor_tensors(m, db, {298.0, 400.0})));
    const EhmModel ehm(m, db,
                       std::make_shared<const CoefficientTensorSet>(assemble_set(m, db, {298.0, 400.0})));
    const auto prog = uniaxial_tension(298.0, 8.33e-5, 0.012, 20);
    const auto a = run_program(prog, taylor).history;
    const auto b = run_program(prog, ehm).history;
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(std::abs(a[i].sigma_bar(0) - b[i].sigma_bar(0)) <=
            1e-8 * std::max(1.0, std::abs(b[i].sigma_bar(0))));
  }

  SUBCASE("elastic response is the Voigt average") {
    const auto m = build_synthetic_rve({4, 4, 4}, 6, 6);
    const EhmModel taylor(
        m, db, std::make_shared<const CoefficientTensorSet>(taylor_tensors(m, db, {298.0, 400.0})));
    const auto C = m.rve.volume_fractions();
    Mat6 Lv = Mat6::Zero();
    for (std::size_t g = 0; g < m.grains.size(); ++g)
      Lv += C[g] * CrystalKernel(db, m.grains[g]).stiffness(298.0);
    const PointState s = taylor.advance(taylor.initial_state(298.0), strain_only(sample_strain()));
    const Vec6 expect = Lv * sample_strain();
    CHECK((s.sigma_bar - expect).cwiseAbs().maxCoeff() < 1e-8 * expect.cwiseAbs().maxCoeff());
  }

  SUBCASE("8 grains in plastic flow: Taylor is the stiffer bound") {
    const auto m = build_synthetic_rve({6, 6, 6}, 8, 7);
    const EhmModel taylor(
        m, db, std::make_shared<const CoefficientTensorSet>(taylor_tensors(m, db, {298.0, 400.0})));
    const EhmModel ehm(m, db,
                       std::make_shared<const CoefficientTensorSet>(assemble_set(m, db, {298.0, 400.0})));
    const auto prog = uniaxial_tension(298.0, 8.33e-5, 0.015, 30);
    const auto a = run_program(prog, taylor).history;
    const auto b = run_program(prog, ehm).history;
    for (double e : {0.004, 0.008, 0.012, 0.015})
      CHECK(stress_at_strain(a, e) >= stress_at_strain(b, e) * (1.0 - 0.005));
  }
}
