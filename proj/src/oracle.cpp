#include "ehm/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "ehm/error.hpp"

namespace ehm {

namespace {

struct GpResult {
  Vec6 x = Vec6::Zero();
  Vec6 sigma = Vec6::Zero();
  Mat6 D = Mat6::Zero();
  bool clamp = false;
};

// Single-crystal implicit update at prescribed total strain: the n = 1, P = 0
// case of the part system, solved for the inelastic increment x.
GpResult gp_solve(const CrystalKernel& k, const Mat6& L, const Mat6& Linv, const Vec6& e_trial,
                  std::span<const double> strength, double T, double dt, const Vec6& x0) {
  GpResult g;
  Vec6 x = x0;
  auto eval = [&](const Vec6& xv, Vec6& sig, FlowResult& f) {
    sig = L * (e_trial - xv);
    f = k.flow(sig, strength, T, dt);
    return Vec6(xv - f.dmu);
  };
  Vec6 sig;
  FlowResult f;
  Vec6 r = eval(x, sig, f);
  double norm = (L * r).norm();
  for (int it = 0;; ++it) {
    const double tol = std::max(1.0e-12 * sig.norm(), 1.0e-10);
    if (norm <= tol + (L * f.jump).norm() && !f.clamp_hit) break;
    if (it >= 60) throw Error(ErrorCode::NoConvergence, "Gauss-point update did not converge");
    const Mat6 J = Mat6::Identity() + f.G * L;
    const Vec6 dx = -J.partialPivLu().solve(r);
    double lambda = 1.0;
    bool ok = false;
    for (int ls = 0; ls < 40; ++ls, lambda *= 0.5) {
      Vec6 st;
      FlowResult ft;
      const Vec6 xt = x + lambda * dx;
      const Vec6 rt = eval(xt, st, ft);
      const double nt = (L * rt).norm();
      if (std::isfinite(nt) && nt <= (1.0 - 1.0e-4 * lambda) * norm) {
        x = xt;
        r = rt;
        sig = st;
        f = ft;
        norm = nt;
        ok = true;
        break;
      }
    }
    if (!ok) throw Error(ErrorCode::NoConvergence, "Gauss-point line search failed");
  }
  g.x = x;
  g.sigma = sig;
  g.clamp = f.clamp_hit;
  const Mat6 D = (Linv + f.G).inverse();
  g.D = 0.5 * (D + D.transpose());
  return g;
}

}  // namespace

FullFieldModel::FullFieldModel(const Microstructure& micro, const MaterialDB& db)
    : mesh_(micro.rve.dims()),
      grain_of_(micro.rve.grain_ids().begin(), micro.rve.grain_ids().end()),
      n_grains_(micro.rve.n_grains()) {
  if (mesh_.n_elements() > kMaxElements)
    throw Error(ErrorCode::InvalidInput,
                "full-field oracle is limited to " + std::to_string(kMaxElements) + " elements");
  kernels_.reserve(micro.grains.size());
  for (const GrainRecord& g : micro.grains) kernels_.emplace_back(db, g);
}

FullFieldState FullFieldModel::initial_state(double T, double T_ref) const {
  FullFieldState s;
  s.T = T;
  s.T_ref = T_ref;
  s.u = Eigen::VectorXd::Zero(mesh_.n_dofs());
  s.gp.resize(static_cast<std::size_t>(mesh_.n_elements()) * VoxelMesh::kGauss);
  for (int e = 0; e < mesh_.n_elements(); ++e)
    for (int q = 0; q < VoxelMesh::kGauss; ++q)
      s.gp[e * VoxelMesh::kGauss + q].slip = kernels_[grain_of_[e]].initial_state();
  return s;
}

FullFieldState FullFieldModel::solve(const FullFieldState& st, const IncrementControl& c,
                                     StepInfo& info) const {
  if (!(c.dt > 0.0)) throw Error(ErrorCode::InvalidInput, "increment dt must be positive");
  constexpr int nq = VoxelMesh::kGauss;
  const int ne = mesh_.n_elements();
  const int nd = mesh_.n_dofs();
  const double T1 = st.T + c.dT;
  const double w = mesh_.gauss_weight();

  std::vector<Mat6> L(n_grains_), Linv(n_grains_);
  for (int g = 0; g < n_grains_; ++g) {
    L[g] = kernels_[g].stiffness(T1);
    Linv[g] = L[g].inverse();
  }
  std::vector<std::vector<double>> strength(st.gp.size());
  for (int e = 0; e < ne; ++e)
    for (int q = 0; q < nq; ++q)
      strength[e * nq + q] = kernels_[grain_of_[e]].strength(st.gp[e * nq + q].slip, T1);

  std::vector<int> free;
  Vec6 d = Vec6::Zero();
  for (int k = 0; k < 6; ++k) {
    if (c.stress_controlled[k]) {
      free.push_back(k);
      d(k) = st.eps_bar_rate(k) * c.dt;
    } else {
      d(k) = c.value(k);
    }
  }
  const int m = static_cast<int>(free.size());

  std::vector<GpResult> res(st.gp.size());
  for (std::size_t i = 0; i < st.gp.size(); ++i) res[i].x = st.gp[i].mu_rate * c.dt;

  struct Eval {
    Eigen::VectorXd r;
    Vec6 sigma_bar = Vec6::Zero();
    double force = 0.0;
    double macro = 0.0;
  };
  const double h2 = std::pow(mesh_.element_volume(), 2.0 / 3.0);

  // Gauss-point updates and global residual for displacement u and macro
  // strain increment dd; fills `out` with the Gauss-point results.
  auto evaluate = [&](const Eigen::VectorXd& u, const Vec6& dd, std::vector<GpResult>& out) {
    Eval ev;
    ev.r = Eigen::VectorXd::Zero(nd + m);
    const Vec6 eps_bar = st.eps_bar + dd;
    double rms = 0.0;
    for (int e = 0; e < ne; ++e) {
      const int g = grain_of_[e];
      const auto& dofs = mesh_.element_dofs(e);
      Eigen::Matrix<double, 24, 1> ue;
      for (int i = 0; i < 24; ++i) ue(i) = dofs[i] < 0 ? 0.0 : u(dofs[i]);
      Eigen::Matrix<double, 24, 1> fe = Eigen::Matrix<double, 24, 1>::Zero();
      for (int q = 0; q < nq; ++q) {
        const std::size_t i = static_cast<std::size_t>(e) * nq + q;
        const GaussState& h = st.gp[i];
        const Vec6 eps = eps_bar + mesh_.B(q) * ue;
        const Vec6 e_trial = eps - h.mu - kernels_[g].alpha() * (T1 - st.T_ref);
        out[i] = gp_solve(kernels_[g], L[g], Linv[g], e_trial, strength[i], T1, c.dt, out[i].x);
        fe.noalias() += w * mesh_.B(q).transpose() * out[i].sigma;
        ev.sigma_bar += w * out[i].sigma;
        rms += w * out[i].sigma.squaredNorm();
      }
      for (int i = 0; i < 24; ++i)
        if (dofs[i] >= 0) ev.r(dofs[i]) += fe(i);
    }
    for (int i = 0; i < m; ++i) ev.r(nd + i) = ev.sigma_bar(free[i]) - c.value(free[i]);
    ev.force = ev.r.head(nd).norm() / (h2 * std::sqrt(static_cast<double>(std::max(nd, 1)))) /
               std::max(1.0, std::sqrt(rms));
    ev.macro = m ? ev.r.tail(m).cwiseAbs().maxCoeff() /
                       std::max(1.0, ev.sigma_bar.cwiseAbs().maxCoeff())
                 : 0.0;
    return ev;
  };

  Eigen::VectorXd u = st.u;
  Eval ev = evaluate(u, d, res);
  auto merit = [&](const Eval& e) { return std::max(e.force, e.macro); };

  for (int it = 0;; ++it) {
    if (ev.force <= settings_.rel_tol && ev.macro <= settings_.mixed_rel_tol) break;
    if (it >= settings_.max_iterations)
      throw Error(ErrorCode::NoConvergence, "full-field Newton did not converge");
    ++info.newton_iterations;

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(ne) * (300 + 24 * m));
    Eigen::MatrixXd kee = Eigen::MatrixXd::Zero(m, m);
    for (int e = 0; e < ne; ++e) {
      const auto& dofs = mesh_.element_dofs(e);
      ElementMatrix ke = ElementMatrix::Zero();
      Eigen::Matrix<double, 24, 6> kue = Eigen::Matrix<double, 24, 6>::Zero();
      for (int q = 0; q < nq; ++q) {
        const Mat6& D = res[static_cast<std::size_t>(e) * nq + q].D;
        const Eigen::Matrix<double, 24, 6> bd = w * mesh_.B(q).transpose() * D;
        ke.noalias() += bd * mesh_.B(q);
        kue += bd;
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < m; ++j) kee(i, j) += w * D(free[i], free[j]);
      }
      for (int i = 0; i < 24; ++i) {
        if (dofs[i] < 0) continue;
        for (int j = 0; j < 24; ++j)
          if (dofs[j] >= 0 && dofs[j] <= dofs[i]) trips.emplace_back(dofs[i], dofs[j], ke(i, j));
        for (int k = 0; k < m; ++k) trips.emplace_back(nd + k, dofs[i], kue(i, free[k]));
      }
    }
    for (int i = 0; i < m; ++i)
      for (int j = 0; j <= i; ++j) trips.emplace_back(nd + i, nd + j, kee(i, j));
    SparseMatrix K(nd + m, nd + m);
    K.setFromTriplets(trips.begin(), trips.end());
    const SpdSolver solver(K);
    const Eigen::VectorXd delta = -solver.solve(ev.r);

    const double m0 = merit(ev);
    double lambda = 1.0;
    bool ok = false;
    for (int ls = 0; ls < 12; ++ls, lambda *= 0.5) {
      const Eigen::VectorXd ut = u + lambda * delta.head(nd);
      Vec6 dt_ = d;
      for (int i = 0; i < m; ++i) dt_(free[i]) += lambda * delta(nd + i);
      std::vector<GpResult> rt = res;
      Eval et;
      try {
        et = evaluate(ut, dt_, rt);
      } catch (const Error& err) {
        if (err.code() != ErrorCode::NoConvergence) throw;
        continue;
      }
      if (merit(et) < m0 || ls == 11) {
        u = ut;
        d = dt_;
        res = std::move(rt);
        ev = std::move(et);
        ok = true;
        break;
      }
    }
    if (!ok) throw Error(ErrorCode::NoConvergence, "full-field line search failed");
  }

  FullFieldState out = st;
  out.u = u;
  out.T = T1;
  out.time = st.time + c.dt;
  out.eps_bar = st.eps_bar + d;
  out.eps_bar_rate = d / c.dt;
  out.sigma_bar = ev.sigma_bar;
  for (int e = 0; e < ne; ++e) {
    const auto& dofs = mesh_.element_dofs(e);
    Eigen::Matrix<double, 24, 1> ue;
    for (int i = 0; i < 24; ++i) ue(i) = dofs[i] < 0 ? 0.0 : u(dofs[i]);
    const int g = grain_of_[e];
    for (int q = 0; q < nq; ++q) {
      const std::size_t i = static_cast<std::size_t>(e) * nq + q;
      GaussState& h = out.gp[i];
      h.eps = out.eps_bar + mesh_.B(q) * ue;
      h.mu += res[i].x;
      h.mu_rate = res[i].x / c.dt;
      h.sigma = res[i].sigma;
      h.slip = kernels_[g].advance(st.gp[i].slip, h.sigma, strength[i], T1, c.dt);
      info.clamp_hit = info.clamp_hit || res[i].clamp;
    }
  }
  return out;
}

FullFieldState FullFieldModel::advance_depth(const FullFieldState& st, const IncrementControl& c,
                                             StepInfo& info, int depth) const {
  try {
    return solve(st, c, info);
  } catch (const Error& e) {
    if ((e.code() != ErrorCode::NoConvergence && e.code() != ErrorCode::NonPhysicalDensity) ||
        depth >= settings_.max_bisections)
      throw;
  }
  ++info.bisections;
  IncrementControl first = c;
  first.dt = 0.5 * c.dt;
  first.dT = 0.5 * c.dT;
  for (int k = 0; k < 6; ++k)
    first.value(k) = c.stress_controlled[k] ? 0.5 * (st.sigma_bar(k) + c.value(k)) : 0.5 * c.value(k);
  const FullFieldState mid = advance_depth(st, first, info, depth + 1);
  IncrementControl second = c;
  second.dt = c.dt - first.dt;
  second.dT = c.dT - first.dT;
  for (int k = 0; k < 6; ++k)
    if (!c.stress_controlled[k]) second.value(k) = c.value(k) - first.value(k);
  return advance_depth(mid, second, info, depth + 1);
}

FullFieldState FullFieldModel::advance(const FullFieldState& state, const IncrementControl& c,
                                       StepInfo* info) const {
  StepInfo local;
  FullFieldState out = advance_depth(state, c, local, 0);
  if (info) *info = local;
  return out;
}

Vec6 FullFieldModel::reaction_stress(const FullFieldState& st) const {
  const Dims& n = mesh_.dims();
  const Vec3 h(1.0 / n[0], 1.0 / n[1], 1.0 / n[2]);
  Vec6 out = Vec6::Zero();
  for (int k = 0; k < 6; ++k) {
    Vec6 ek = Vec6::Zero();
    ek(k) = 1.0;
    const Mat3 E = voigt::strain_to_tensor(ek);
    for (int ez = 0; ez < n[2]; ++ez)
      for (int ey = 0; ey < n[1]; ++ey)
        for (int ex = 0; ex < n[0]; ++ex) {
          const int e = ex + n[0] * (ey + n[1] * ez);
          // Affine field at the element's unwrapped node positions.
          Eigen::Matrix<double, 24, 1> ua;
          for (int a = 0; a < 8; ++a) {
            const Vec3 x((ex + (a & 1)) * h(0), (ey + ((a >> 1) & 1)) * h(1),
                         (ez + ((a >> 2) & 1)) * h(2));
            ua.segment<3>(3 * a) = E * x;
          }
          for (int q = 0; q < VoxelMesh::kGauss; ++q) {
            const Vec6& s = st.gp[static_cast<std::size_t>(e) * VoxelMesh::kGauss + q].sigma;
            out(k) += mesh_.gauss_weight() * s.dot(mesh_.B(q) * ua);
          }
        }
  }
  return out;
}

std::vector<Vec6> FullFieldModel::grain_stress(const FullFieldState& st) const {
  std::vector<Vec6> out(n_grains_, Vec6::Zero());
  std::vector<double> vol(n_grains_, 0.0);
  for (int e = 0; e < mesh_.n_elements(); ++e)
    for (int q = 0; q < VoxelMesh::kGauss; ++q) {
      out[grain_of_[e]] += st.gp[static_cast<std::size_t>(e) * VoxelMesh::kGauss + q].sigma;
      vol[grain_of_[e]] += 1.0;
    }
  for (int g = 0; g < n_grains_; ++g) out[g] /= vol[g];
  return out;
}

CoefficientTensorSet taylor_tensors(const Microstructure& micro, const MaterialDB& db,
                                    const std::vector<double>& T_base) {
  const int n = micro.rve.n_grains();
  std::vector<CrystalKernel> kernels;
  kernels.reserve(n);
  for (const GrainRecord& g : micro.grains) kernels.emplace_back(db, g);
  CoefficientTensorSet set;
  set.n_parts = n;
  set.T_base = T_base;
  set.C = micro.rve.volume_fractions();
  for (double T : T_base) {
    CoefficientSlab s;
    s.A.assign(n, Mat6::Identity());
    s.P.assign(static_cast<std::size_t>(n) * n, Mat6::Zero());
    s.Ath.assign(n, Vec6::Zero());
    s.M.resize(n);
    for (int a = 0; a < n; ++a) s.M[a] = kernels[a].stiffness(T).inverse();
    set.slabs.push_back(std::move(s));
  }
  return set;
}

}  // namespace ehm
