#include "ehm/ehm_core.hpp"

#include <algorithm>
#include <cmath>

#include "ehm/error.hpp"

namespace ehm {

IncrementControl IncrementControl::strain(const Vec6& d_eps_bar, double dT, double dt) {
  IncrementControl c;
  c.dt = dt;
  c.dT = dT;
  c.value = d_eps_bar;
  return c;
}

bool IncrementControl::any_stress() const {
  return std::any_of(stress_controlled.begin(), stress_controlled.end(), [](bool b) { return b; });
}

double equivalent_strain(const Vec6& e) {
  return std::sqrt(2.0 / 3.0 * voigt::strain_contraction(e));
}

Homogenized homogenize(const PointState& state, const std::vector<double>& C) {
  Homogenized h;
  for (std::size_t a = 0; a < state.parts.size(); ++a) {
    h.sigma_bar += C[a] * state.parts[a].sigma;
    h.eps_bar_p += C[a] * state.parts[a].mu;
  }
  h.eps_eqp = equivalent_strain(h.eps_bar_p);
  return h;
}

// ---------------------------------------------------------------------------

LocalSystem::LocalSystem(const std::vector<CrystalKernel>& kernels, const CoefficientSlab& slab,
                         std::vector<Vec6> base, std::vector<std::vector<double>> strength,
                         double T, double dt)
    : kernels_(kernels),
      slab_(slab),
      base_(std::move(base)),
      strength_(std::move(strength)),
      T_(T),
      dt_(dt) {
  L_.resize(base_.size());
  for (std::size_t a = 0; a < base_.size(); ++a) {
    Eigen::LLT<Mat6> llt(slab_.M[a]);
    if (llt.info() != Eigen::Success)
      throw Error(ErrorCode::SingularSystem, "part compliance is not positive definite");
    L_[a] = llt.solve(Mat6::Identity());
    L_[a] = 0.5 * (L_[a] + L_[a].transpose()).eval();
  }
}

Vec6 LocalSystem::stress(const Eigen::VectorXd& x, int a) const {
  const int n = n_parts();
  Vec6 e = base_[a] - x.segment<6>(6 * a);
  for (int b = 0; b < n; ++b) e.noalias() += slab_.p(a, b) * x.segment<6>(6 * b);
  return L_[a] * e;
}

Eigen::VectorXd LocalSystem::residual(const Eigen::VectorXd& x, std::vector<Mat6>* G,
                                      bool* clamp, Eigen::VectorXd* jump) const {
  const int n = n_parts();
  Eigen::VectorXd r(6 * n);
  if (G) G->resize(n);
  if (jump) jump->resize(6 * n);
  bool hit = false;
  for (int a = 0; a < n; ++a) {
    const FlowResult f = kernels_[a].flow(stress(x, a), strength_[a], T_, dt_);
    r.segment<6>(6 * a) = x.segment<6>(6 * a) - f.dmu;
    if (G) (*G)[a] = f.G;
    if (jump) jump->segment<6>(6 * a) = f.jump;
    hit = hit || f.clamp_hit;
  }
  if (clamp) *clamp = hit;
  return r;
}

Eigen::MatrixXd LocalSystem::jacobian(const std::vector<Mat6>& G) const {
  // dR_a/dx_b = delta_ab I - G_a L_a (P_ab - delta_ab I)
  const int n = n_parts();
  Eigen::MatrixXd J(6 * n, 6 * n);
  for (int a = 0; a < n; ++a) {
    const Mat6 GL = G[a] * L_[a];
    for (int b = 0; b < n; ++b) J.block<6, 6>(6 * a, 6 * b) = -GL * slab_.p(a, b);
    J.block<6, 6>(6 * a, 6 * a) += Mat6::Identity() + GL;
  }
  return J;
}

Eigen::MatrixXd LocalSystem::jacobian(const Eigen::VectorXd& x) const {
  std::vector<Mat6> G;
  residual(x, &G);
  return jacobian(G);
}

double LocalSystem::scaled_norm(const Eigen::VectorXd& r) const {
  double s = 0.0;
  for (int a = 0; a < n_parts(); ++a) s += (L_[a] * r.segment<6>(6 * a)).squaredNorm();
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------

EhmModel::EhmModel(const Microstructure& micro, const MaterialDB& db,
                   std::shared_ptr<const CoefficientTensorSet> tensors)
    : tensors_(std::move(tensors)) {
  if (!tensors_ || tensors_->n_parts != micro.rve.n_grains() ||
      static_cast<int>(micro.grains.size()) != tensors_->n_parts)
    throw Error(ErrorCode::InvalidInput, "coefficient tensors do not match the microstructure");
  kernels_.reserve(micro.grains.size());
  for (const GrainRecord& g : micro.grains) kernels_.emplace_back(db, g);
}

PointState EhmModel::initial_state(double T, double T_ref) const {
  PointState s;
  s.T = T;
  s.T_ref = T_ref;
  s.parts.resize(kernels_.size());
  for (std::size_t a = 0; a < kernels_.size(); ++a) s.parts[a].slip = kernels_[a].initial_state();
  return s;
}

LocalSystem EhmModel::local_system(const PointState& st, const CoefficientSlab& slab,
                                   const Vec6& d_eps_bar, double dT, double dt) const {
  const int n = n_parts();
  const double T1 = st.T + dT;
  std::vector<Vec6> base(n);
  std::vector<std::vector<double>> strength(n);
  for (int a = 0; a < n; ++a) {
    const PartState& p = st.parts[a];
    base[a] = p.eps + slab.A[a] * d_eps_bar + slab.Ath[a] * dT - p.mu -
              kernels_[a].alpha() * (T1 - st.T_ref);
    strength[a] = kernels_[a].strength(p.slip, T1);
  }
  return LocalSystem(kernels_, slab, std::move(base), std::move(strength), T1, dt);
}

struct EhmModel::Solved {
  Eigen::VectorXd x;
  std::vector<Vec6> sigma;
  Vec6 sigma_bar = Vec6::Zero();
  Mat6 tangent = Mat6::Zero();
  int iterations = 0;
  bool clamp_hit = false;
};

EhmModel::Solved EhmModel::solve_strain(const PointState& st, const CoefficientSlab& slab,
                                        const Vec6& d_eps_bar, double dT, double dt,
                                        bool want_tangent) const {
  const int n = n_parts();
  const LocalSystem sys = local_system(st, slab, d_eps_bar, dT, dt);
  const auto& C = tensors_->C;

  Eigen::VectorXd x(6 * n);
  for (int a = 0; a < n; ++a) x.segment<6>(6 * a) = st.parts[a].mu_rate * dt;

  std::vector<Mat6> G;
  bool clamp = false;
  Eigen::VectorXd jump;
  Eigen::VectorXd r = sys.residual(x, &G, &clamp, &jump);
  double norm = sys.scaled_norm(r);
  double allowance = sys.scaled_norm(jump);
  auto stress_norm = [&] {
    double s = 0.0;
    for (int a = 0; a < n; ++a) s += sys.stress(x, a).squaredNorm();
    return std::sqrt(s);
  };
  Solved out;
  int it = 0;
  for (;; ++it) {
    const double tol =
        std::max(settings_.rel_tol * stress_norm(), settings_.abs_tol);
    if (norm <= tol + allowance && !clamp) break;
    if (it >= settings_.max_iterations)
      throw Error(ErrorCode::NoConvergence,
                  "part Newton did not converge (residual " + std::to_string(norm) + " MPa)");
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(sys.jacobian(G));
    const Eigen::VectorXd dx = -lu.solve(r);
    if (!dx.allFinite()) throw Error(ErrorCode::NoConvergence, "singular part Jacobian");

    double lambda = 1.0;
    bool accepted = false;
    for (int k = 0; k < 40; ++k, lambda *= 0.5) {
      const Eigen::VectorXd xt = x + lambda * dx;
      std::vector<Mat6> Gt;
      bool ct = false;
      Eigen::VectorXd jt;
      Eigen::VectorXd rt = sys.residual(xt, &Gt, &ct, &jt);
      const double nt = sys.scaled_norm(rt);
      if (std::isfinite(nt) && nt <= (1.0 - 1.0e-4 * lambda) * norm) {
        x = xt;
        r = std::move(rt);
        G = std::move(Gt);
        clamp = ct;
        norm = nt;
        allowance = sys.scaled_norm(jt);
        accepted = true;
        break;
      }
    }
    if (!accepted)
      throw Error(ErrorCode::NoConvergence, "line search failed in the part Newton solve");
  }

  out.x = x;
  out.iterations = it;
  out.clamp_hit = clamp;
  out.sigma.resize(n);
  for (int a = 0; a < n; ++a) {
    out.sigma[a] = sys.stress(x, a);
    out.sigma_bar += C[a] * out.sigma[a];
  }

  if (want_tangent) {
    // dx/d(d_eps_bar) = J^-1 G L A at the converged point.
    sys.residual(x, &G);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(sys.jacobian(G));
    Eigen::MatrixXd B(6 * n, 6);
    for (int a = 0; a < n; ++a) B.middleRows<6>(6 * a) = G[a] * sys.stiffness(a) * slab.A[a];
    const Eigen::MatrixXd dX = lu.solve(B);
    for (int a = 0; a < n; ++a) {
      Mat6 de = slab.A[a] - dX.middleRows<6>(6 * a);
      for (int b = 0; b < n; ++b) de.noalias() += slab.p(a, b) * dX.middleRows<6>(6 * b);
      out.tangent.noalias() += C[a] * sys.stiffness(a) * de;
    }
  }
  return out;
}

PointState EhmModel::solve_mixed(const PointState& st, const IncrementControl& c,
                                 StepInfo& info) const {
  if (!(c.dt > 0.0)) throw Error(ErrorCode::InvalidInput, "increment dt must be positive");
  const int n = n_parts();
  const double T1 = st.T + c.dT;
  const CoefficientSlab slab = tensors_->interpolate(T1);

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

  Solved sol;
  if (free.empty()) {
    sol = solve_strain(st, slab, d, c.dT, c.dt, false);
    info.newton_iterations += sol.iterations;
  } else {
    const int m = static_cast<int>(free.size());
    for (int outer = 0;; ++outer) {
      sol = solve_strain(st, slab, d, c.dT, c.dt, true);
      info.newton_iterations += sol.iterations;
      Eigen::VectorXd r(m);
      Eigen::MatrixXd D(m, m);
      for (int i = 0; i < m; ++i) {
        r(i) = sol.sigma_bar(free[i]) - c.value(free[i]);
        for (int j = 0; j < m; ++j) D(i, j) = sol.tangent(free[i], free[j]);
      }
      const double scale = std::max(1.0, sol.sigma_bar.cwiseAbs().maxCoeff());
      if (r.cwiseAbs().maxCoeff() <= settings_.mixed_rel_tol * scale) break;
      if (outer >= settings_.max_outer_iterations)
        throw Error(ErrorCode::NoConvergence, "mixed-control iteration did not converge");
      const Eigen::VectorXd delta = D.partialPivLu().solve(r);
      if (!delta.allFinite())
        throw Error(ErrorCode::NoConvergence, "singular macro tangent in mixed control");
      for (int i = 0; i < m; ++i) d(free[i]) -= delta(i);
    }
  }
  info.clamp_hit = info.clamp_hit || sol.clamp_hit;

  PointState out = st;
  out.T = T1;
  out.time = st.time + c.dt;
  out.eps_bar = st.eps_bar + d;
  out.eps_bar_rate = d / c.dt;
  out.sigma_bar.setZero();
  for (int a = 0; a < n; ++a) {
    PartState& p = out.parts[a];
    const Vec6 dmu = sol.x.segment<6>(6 * a);
    Vec6 de = slab.A[a] * d + slab.Ath[a] * c.dT;
    for (int b = 0; b < n; ++b) de.noalias() += slab.p(a, b) * sol.x.segment<6>(6 * b);
    p.eps += de;
    p.mu += dmu;
    p.mu_rate = dmu / c.dt;
    p.sigma = sol.sigma[a];
    p.slip = kernels_[a].advance(st.parts[a].slip, p.sigma,
                                 kernels_[a].strength(st.parts[a].slip, T1), T1, c.dt);
    out.sigma_bar += tensors_->C[a] * p.sigma;
  }
  return out;
}

PointState EhmModel::step(const PointState& state, const IncrementControl& control,
                          StepInfo* info) const {
  StepInfo local;
  PointState out = solve_mixed(state, control, local);
  if (info) *info = local;
  return out;
}

PointState EhmModel::advance_depth(const PointState& st, const IncrementControl& c,
                                   StepInfo& info, int depth) const {
  try {
    return solve_mixed(st, c, info);
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
  const PointState mid = advance_depth(st, first, info, depth + 1);
  IncrementControl second = c;
  second.dt = c.dt - first.dt;
  second.dT = c.dT - first.dT;
  for (int k = 0; k < 6; ++k)
    if (!c.stress_controlled[k]) second.value(k) = c.value(k) - first.value(k);
  return advance_depth(mid, second, info, depth + 1);
}

PointState EhmModel::advance(const PointState& state, const IncrementControl& control,
                             StepInfo* info) const {
  StepInfo local;
  PointState out = advance_depth(state, control, local, 0);
  if (info) *info = local;
  return out;
}

}  // namespace ehm
