#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "ehm/constitutive.hpp"
#include "ehm/error.hpp"
#include "ehm/fip.hpp"
#include "support.hpp"

using namespace ehm;

namespace {

PairMax brute_force(const std::vector<double>& rho, const AdjacencyGraph& g) {
  PairMax best;
  best.value = -1.0;
  const int n = static_cast<int>(rho.size());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      if (std::find(g.neighbors[i].begin(), g.neighbors[i].end(), j) == g.neighbors[i].end())
        continue;
      const double d = std::abs(rho[i] - rho[j]);
      if (d > best.value) best = {d, i, j};
    }
  return best;
}

PointState virgin_state(const Microstructure& m, const MaterialDB& db) {
  PointState s;
  for (const auto& g : m.grains) {
    PartState p;
    p.slip = CrystalKernel(db, g).initial_state();
    s.parts.push_back(p);
  }
  return s;
}

}  // namespace

TEST_CASE("virgin grains carry initial forest plus debris") {
  const MaterialDB db = default_material();
  TextureSpec tex;
  tex.beta_fraction = 0.5;
  const auto m = build_synthetic_rve({4, 4, 4}, 6, 1, tex);
  for (double r : grain_rho_tot(virgin_state(m, db))) CHECK(r == 1.0e12 + 1.0e10);
}

TEST_CASE("grain value is the largest system") {
  const MaterialDB db = default_material();
  const auto m = build_synthetic_rve({4, 4, 4}, 2, 1);
  PointState s = virgin_state(m, db);
  s.parts[1].slip.rho_fwd[7] = 2.0e12;
  const auto r = grain_rho_tot(s);
  CHECK(r[1] == 2.0e12 + 1.0e10);
  CHECK(r[0] == 1.0e12 + 1.0e10);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 5e12);
  for (auto& p : s.parts) {
    for (int k = 0; k < p.slip.n_systems(); ++k) {
      p.slip.rho_fwd[k] = u(rng);
      p.slip.rho_rev_plus[k] = u(rng);
      p.slip.rho_rev_minus[k] = u(rng);
    }
    p.slip.rho_deb = u(rng);
  }
  const auto q = grain_rho_tot(s);
  for (std::size_t g = 0; g < s.parts.size(); ++g) {
    double best = 0.0;
    const auto& sl = s.parts[g].slip;
    for (int k = 0; k < sl.n_systems(); ++k)
      best = std::max(best, sl.rho_fwd[k] + sl.rho_rev_plus[k] + sl.rho_rev_minus[k] + sl.rho_deb);
    CHECK(q[g] == best);
  }
}

TEST_CASE("delta_rho_max examples") {
  const auto m = test::two_grain_split(4, {}, {});
  const auto g = adjacency(m.rve);
  const PairMax p = delta_rho_max({2.0e12, 1.2e12}, g);
  CHECK(p.value == doctest::Approx(0.8e12).epsilon(1e-15));
  CHECK(p.i == 0);
  CHECK(p.j == 1);
  CHECK(delta_rho_max({3.0, 3.0}, g).value == 0.0);

  const auto one = test::single_grain(2, {});
  try {
    delta_rho_max({1.0}, adjacency(one.rve));
    FAIL("expected NoPairs");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoPairs);
  }
}

TEST_CASE("delta_rho_max equals a brute-force scan and respects symmetries") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(1e11, 1e13);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = build_synthetic_rve({8, 8, 8}, 145, 100 + trial);
    const auto g = adjacency(m.rve);
    std::vector<double> rho(145);
    for (double& r : rho) r = u(rng);
    const PairMax p = delta_rho_max(rho, g);
    const PairMax b = brute_force(rho, g);
    CHECK(p.value == b.value);
    CHECK(p.i == b.i);
    CHECK(p.j == b.j);
    CHECK(std::binary_search(g.neighbors[p.i].begin(), g.neighbors[p.i].end(), p.j));

    std::vector<double> shifted = rho, scaled = rho;
    for (double& r : shifted) r += 7.0e11;
    for (double& r : scaled) r *= 3.5;
    CHECK(delta_rho_max(shifted, g).value == doctest::Approx(p.value).epsilon(1e-12));
    CHECK(delta_rho_max(scaled, g).value == doctest::Approx(3.5 * p.value).epsilon(1e-14));

    // Relabel grains by a random permutation.
    std::vector<int> perm(145);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::int32_t> ids = m.rve.grain_ids();
    for (auto& id : ids) id = perm[id];
    const VoxelRve relabeled(m.rve.dims(), ids, 145);
    std::vector<double> rho2(145);
    for (int i = 0; i < 145; ++i) rho2[perm[i]] = rho[i];
    const PairMax q = delta_rho_max(rho2, adjacency(relabeled));
    CHECK(q.value == p.value);
    CHECK(std::minmax(q.i, q.j) == std::minmax(perm[p.i], perm[p.j]));
  }
}

TEST_CASE("ties go to the lexicographically smallest pair") {
  std::vector<std::int32_t> ids(8);
  std::iota(ids.begin(), ids.end(), 0);
  const VoxelRve rve({2, 2, 2}, ids, 8);
  const auto g = adjacency(rve);
  std::vector<double> rho = {1, 0, 0, 1, 0, 1, 1, 0};
  const PairMax p = delta_rho_max(rho, g);
  const PairMax b = brute_force(rho, g);
  CHECK(p.value == 1.0);
  CHECK(p.i == b.i);
  CHECK(p.j == b.j);
}

TEST_CASE("equivalent plastic strain") {
  PointState s;
  s.parts.resize(3);
  const std::vector<double> C = {0.2, 0.3, 0.5};
  CHECK(eqp(s, C) == 0.0);

  const double p = 1.234e-3;
  for (auto& part : s.parts) part.mu << p, -p / 2, -p / 2, 0, 0, 0;
  CHECK(std::abs(eqp(s, C) - p) < 1e-14);

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1e-2, 1e-2);
  for (auto& part : s.parts)
    for (int k = 0; k < 6; ++k) part.mu(k) = u(rng);
  Vec6 avg = Vec6::Zero();
  for (int a = 0; a < 3; ++a) avg += C[a] * s.parts[a].mu;
  const Mat3 e = voigt::strain_to_tensor(avg);
  double contraction = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) contraction += e(i, j) * e(i, j);
  CHECK(eqp(s, C) == doctest::Approx(std::sqrt(2.0 / 3.0 * contraction)).epsilon(1e-14));
}
