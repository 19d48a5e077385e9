#include <doctest.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "ehm/constitutive.hpp"
#include "ehm/error.hpp"
#include "ehm/influence.hpp"
#include "support.hpp"

using namespace ehm;

namespace {

const std::vector<double> kBase = {295, 373, 473, 589, 700, 811, 873, 923};

struct Sums {
  double a = 0, p = 0, th = 0;
};

Sums consistency(const CoefficientSlab& s, const std::vector<double>& C) {
  const int n = static_cast<int>(C.size());
  Sums out;
  Mat6 sa = Mat6::Zero();
  Vec6 st = Vec6::Zero();
  for (int b = 0; b < n; ++b) {
    sa += C[b] * s.A[b];
    st += C[b] * s.Ath[b];
  }
  out.a = (sa - Mat6::Identity()).cwiseAbs().maxCoeff();
  out.th = st.cwiseAbs().maxCoeff();
  for (int a = 0; a < n; ++a) {
    Mat6 sp = Mat6::Zero();
    for (int b = 0; b < n; ++b) sp += C[b] * s.p(b, a);
    out.p = std::max(out.p, sp.cwiseAbs().maxCoeff());
  }
  return out;
}

std::vector<Mat6> stiffnesses(const Microstructure& m, const MaterialDB& db, double T) {
  std::vector<Mat6> L;
  for (const auto& g : m.grains) L.push_back(CrystalKernel(db, g).stiffness(T));
  return L;
}

GrainRecord random_grain(std::mt19937_64& rng, Phase ph = Phase::HcpAlpha) {
  return {test::random_euler(rng), ph};
}

}  // namespace

TEST_CASE("homogeneous RVE: A = I, P = 0, thermal = 0, uniform stress") {
  std::mt19937_64 rng(1);
  const MaterialDB db = default_material();
  const auto m = test::single_grain(4, random_grain(rng));
  const auto set = assemble_set(m, db, {298.0});
  const auto& s = set.slabs[0];
  CHECK(test::max_abs(s.A[0] - Mat6::Identity()) < 1e-10);
  CHECK(test::max_abs(s.P[0]) < 1e-10);
  CHECK(test::max_abs(s.Ath[0]) < 1e-10);

  // Patch test: no fluctuation, so every element sees the same strain.
  const InfluenceProblem prob(m.rve, stiffnesses(m, db, 298.0));
  const auto u = prob.displacements(Eigen::MatrixXd::Zero(6 * prob.mesh().n_elements(), 1));
  CHECK(u.cwiseAbs().maxCoeff() == 0.0);
  const auto fluct = prob.solve_elastic();
  CHECK(test::max_abs(fluct[0]) < 1e-10);
}

TEST_CASE("laminate concentration tensors match the layer closed form") {
  std::mt19937_64 rng(2);
  const MaterialDB db = default_material();
  const auto m = test::two_grain_split(4, random_grain(rng), random_grain(rng, Phase::BccBeta));
  const auto L = stiffnesses(m, db, 298.0);
  const auto set = assemble_set(m, db, {298.0});

  // Layers normal to x: in-plane strains (22, 33, 23) equal the macro strain;
  // the traction components (11, 13, 12) are continuous; equal fractions.
  const int t[3] = {0, 4, 5};
  Eigen::Matrix3d K;
  Eigen::Matrix<double, 3, 6> R;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) K(i, j) = L[0](t[i], t[j]) + L[1](t[i], t[j]);
    for (int j = 0; j < 6; ++j) R(i, j) = L[1](t[i], j) - L[0](t[i], j);
  }
  const Eigen::Matrix<double, 3, 6> d1 = K.lu().solve(R);
  Mat6 A0 = Mat6::Identity(), A1 = Mat6::Identity();
  for (int i = 0; i < 3; ++i) {
    A0.row(t[i]) += d1.row(i);
    A1.row(t[i]) -= d1.row(i);
  }
  CHECK(test::max_abs(set.slabs[0].A[0] - A0) < 1e-10);
  CHECK(test::max_abs(set.slabs[0].A[1] - A1) < 1e-10);
}

TEST_CASE("inelastic influence columns match direct eigenstrain loading") {
  std::mt19937_64 rng(3);
  const MaterialDB db = default_material();
  const auto m = test::two_grain_split(4, random_grain(rng), random_grain(rng));
  const InfluenceProblem prob(m.rve, stiffnesses(m, db, 298.0));
  const auto P = prob.solve_inelastic();
  const VoxelMesh& mesh = prob.mesh();
  const int ne = mesh.n_elements();
  const auto& ids = m.rve.grain_ids();
  const auto counts = m.rve.grain_voxel_counts();

  double worst = 0.0;
  for (int a = 0; a < 2; ++a)
    for (int k = 0; k < 6; ++k) {
      Eigen::MatrixXd eta = Eigen::MatrixXd::Zero(6 * ne, 1);
      for (int e = 0; e < ne; ++e)
        if (ids[e] == a) eta(6 * e + k, 0) = 1.0;
      const Eigen::VectorXd u = prob.displacements(eta).col(0);
      std::vector<Vec6> avg(2, Vec6::Zero());
      for (int e = 0; e < ne; ++e) avg[ids[e]] += mesh.element_strain(e, u);
      for (int b = 0; b < 2; ++b) {
        avg[b] /= counts[b];
        worst = std::max(worst, (P[b * 2 + a].col(k) - avg[b]).cwiseAbs().maxCoeff());
      }
    }
  CHECK(worst < 1e-10);
}

TEST_CASE("identities linking A, P and the thermal tensor") {
  std::mt19937_64 rng(4);
  const MaterialDB db = default_material();
  TextureSpec tex;
  tex.beta_fraction = 0.3;
  const auto m = build_synthetic_rve({6, 6, 6}, 7, 4, tex);
  const auto set = assemble_set(m, db, {400.0});
  const auto& s = set.slabs[0];
  const int n = set.n_parts;
  std::vector<Vec6> alpha;
  for (const auto& g : m.grains) alpha.push_back(CrystalKernel(db, g).alpha());

  double a_err = 0.0, th_err = 0.0;
  for (int b = 0; b < n; ++b) {
    Mat6 sum_p = Mat6::Zero();
    Vec6 sup = Vec6::Zero();
    for (int a = 0; a < n; ++a) {
      sum_p += s.p(b, a);
      sup += s.p(b, a) * alpha[a];
    }
    // Macro strain acts as a uniform eigenstrain of opposite sign.
    a_err = std::max(a_err, test::max_abs(s.A[b] - (Mat6::Identity() - sum_p)));
    // Thermal load is the superposition of per-part expansion eigenstrains.
    th_err = std::max(th_err, (s.Ath[b] - sup).cwiseAbs().maxCoeff() / alpha[0].norm());
  }
  CHECK(a_err < 1e-10);
  CHECK(th_err < 1e-10);

  // Reciprocity C_b P(b,a) M_a = C_a M_b P(a,b)^T; reported only.
  double recip = 0.0, scale = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      const Mat6 l = set.C[b] * s.p(b, a) * s.M[a];
      const Mat6 r = set.C[a] * s.M[b] * s.p(a, b).transpose();
      recip = std::max(recip, test::max_abs(l - r));
      scale = std::max(scale, test::max_abs(l));
    }
  MESSAGE("P reciprocity: max deviation " << recip << " relative to " << scale);
}

TEST_CASE("consistency sums at base and interpolated temperatures") {
  const MaterialDB db = default_material();
  TextureSpec tex;
  tex.beta_fraction = 0.2;
  const auto m = build_synthetic_rve({6, 6, 6}, 12, 8, tex);
  const auto set = assemble_set(m, db, kBase);
  REQUIRE(set.slabs.size() == 8);
  for (const auto& s : set.slabs) {
    const Sums c = consistency(s, set.C);
    CHECK(c.a < 1e-8);
    CHECK(c.p < 1e-8);
    CHECK(c.th < 1e-8);
    for (const Mat6& M : s.M) {
      CHECK(test::max_abs(M - M.transpose()) < 1e-12 * test::max_abs(M));
      CHECK(Eigen::LLT<Mat6>(M).info() == Eigen::Success);
    }
  }
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(295.0, 923.0);
  for (int i = 0; i < 10; ++i) {
    const Sums c = consistency(set.interpolate(u(rng)), set.C);
    CHECK(c.a < 1e-8);
    CHECK(c.p < 1e-8);
    CHECK(c.th < 1e-8);
  }
}

TEST_CASE("interpolation") {
  const MaterialDB db = default_material();
  const auto m = build_synthetic_rve({4, 4, 4}, 3, 2);
  const auto set = assemble_set(m, db, {300.0, 500.0, 700.0});

  const auto at = set.interpolate(500.0);
  for (int b = 0; b < 3; ++b) CHECK(test::max_abs(at.A[b] - set.slabs[1].A[b]) == 0.0);

  const auto mid = set.interpolate(400.0);
  for (std::size_t k = 0; k < mid.P.size(); ++k)
    CHECK(test::max_abs(mid.P[k] - 0.5 * (set.slabs[0].P[k] + set.slabs[1].P[k])) < 1e-15);
  for (int b = 0; b < 3; ++b)
    CHECK(test::max_abs(mid.M[b] - 0.5 * (set.slabs[0].M[b] + set.slabs[1].M[b])) < 1e-18);

  for (double T : {299.0, 701.0}) {
    try {
      set.interpolate(T);
      FAIL("expected OutOfRangeTemperature");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::OutOfRangeTemperature);
    }
  }
}

TEST_CASE("temperature-independent elasticity gives identical slabs") {
  MaterialDB db = default_material();
  db.hcp.elastic.dC_dT.setZero();
  db.bcc.elastic.dC_dT.setZero();
  const auto m = build_synthetic_rve({4, 4, 4}, 4, 6);
  const auto set = assemble_set(m, db, {300.0, 600.0, 900.0});
  for (int t = 1; t < 3; ++t)
    for (std::size_t k = 0; k < set.slabs[0].P.size(); ++k)
      CHECK(test::max_abs(set.slabs[t].P[k] - set.slabs[0].P[k]) == 0.0);
}

TEST_CASE("homogenized stiffness lies between the Reuss and Voigt bounds") {
  const MaterialDB db = default_material();
  TextureSpec tex;
  tex.beta_fraction = 0.4;
  const auto m = build_synthetic_rve({6, 6, 6}, 10, 14, tex);
  const auto set = assemble_set(m, db, {298.0});
  const auto& s = set.slabs[0];
  Mat6 Lh = Mat6::Zero(), Lv = Mat6::Zero(), Mr = Mat6::Zero();
  for (int a = 0; a < set.n_parts; ++a) {
    const Mat6 L = s.M[a].inverse();
    Lh += set.C[a] * L * s.A[a];
    Lv += set.C[a] * L;
    Mr += set.C[a] * s.M[a];
  }
  const Mat6 Lr = Mr.inverse();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int i = 0; i < 20; ++i) {
    Vec6 e;
    for (int k = 0; k < 6; ++k) e(k) = g(rng);
    const double w = e.dot(Lh * e);
    CHECK(w <= e.dot(Lv * e) * (1.0 + 1e-12));
    CHECK(w >= e.dot(Lr * e) * (1.0 - 1e-12));
  }
}

TEST_CASE("cache round trip is bit-exact") {
  const MaterialDB db = default_material();
  const auto m = build_synthetic_rve({5, 5, 5}, 6, 10);
  const auto set = assemble_set(m, db, {295.0, 700.0});
  const auto dir = test::scratch_dir("cache");
  write_cache(dir / "a.ehmc", set);
  const auto back = read_cache(dir / "a.ehmc");
  CHECK(back.n_parts == set.n_parts);
  CHECK(back.T_base == set.T_base);
  CHECK(back.C == set.C);
  for (std::size_t t = 0; t < set.slabs.size(); ++t) {
    const auto& x = set.slabs[t];
    const auto& y = back.slabs[t];
    for (std::size_t k = 0; k < x.P.size(); ++k)
      CHECK(std::memcmp(x.P[k].data(), y.P[k].data(), sizeof(Mat6)) == 0);
    for (std::size_t k = 0; k < x.A.size(); ++k) {
      CHECK(std::memcmp(x.A[k].data(), y.A[k].data(), sizeof(Mat6)) == 0);
      CHECK(std::memcmp(x.M[k].data(), y.M[k].data(), sizeof(Mat6)) == 0);
      CHECK(std::memcmp(x.Ath[k].data(), y.Ath[k].data(), sizeof(Vec6)) == 0);
    }
  }
  write_cache(dir / "b.ehmc", back);
  std::ifstream fa(dir / "a.ehmc", std::ios::binary), fb(dir / "b.ehmc", std::ios::binary);
  const std::string sa{std::istreambuf_iterator<char>(fa), {}};
  const std::string sb{std::istreambuf_iterator<char>(fb), {}};
  CHECK(sa == sb);
  CHECK(sa.substr(0, 4) == "EHMC");

  // Truncated files are rejected.
  {
    std::ofstream out(dir / "c.ehmc", std::ios::binary);
    out.write(sa.data(), static_cast<std::streamsize>(sa.size() / 2));
  }
  CHECK_THROWS_AS(read_cache(dir / "c.ehmc"), Error);
}
