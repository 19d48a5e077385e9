#include "ehm/constitutive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ehm/error.hpp"

namespace ehm {

namespace {

std::atomic<std::uint64_t> g_flow_calls{0};

constexpr double kMPa = 1.0e6;

void check_density(double v, const char* what) {
  if (!(v >= 0.0) || !std::isfinite(v))
    throw Error(ErrorCode::NonPhysicalDensity,
                std::string(what) + " density is negative or not finite");
}

}  // namespace

std::uint64_t kernel_invocations() noexcept { return g_flow_calls.load(); }

SlipState initial_slip_state(std::span<const SlipFamilyParams* const> params) {
  const std::size_t n = params.size();
  SlipState st;
  st.rho_fwd.resize(n);
  st.rho_rev_plus.assign(n, 0.0);
  st.rho_rev_minus.assign(n, 0.0);
  st.gamma_acc.assign(n, 0.0);
  st.rho0.resize(n);
  st.last_sign.assign(n, 0);
  for (std::size_t s = 0; s < n; ++s) {
    st.rho_fwd[s] = params[s]->rho_for0;
    st.rho0[s] = params[s]->rho_for0;
  }
  st.rho_deb = n ? params[0]->rho_deb0 : 0.0;
  return st;
}

double athermal_strength(const SlipFamilyParams& p, double T) {
  return p.s_298K - p.s0_ini * (1.0 - std::exp((T - p.T_ref_s) / p.T_hat));
}

std::vector<double> slip_strength(const SlipState& st,
                                  std::span<const SlipFamilyParams* const> params, double T,
                                  double mu) {
  check_density(st.rho_deb, "debris");
  std::vector<double> s(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const SlipFamilyParams& p = *params[i];
    check_density(st.rho_fwd[i], "forward");
    check_density(st.rho_rev_plus[i], "reversible");
    check_density(st.rho_rev_minus[i], "reversible");
    const double s_for = mu * p.chi * p.b * std::sqrt(st.rho_for(i));
    double s_deb = 0.0;
    if (st.rho_deb > 0.0) {
      const double bs = p.b * std::sqrt(st.rho_deb);
      s_deb = mu * p.k_deb * bs * std::log(1.0 / bs);
    }
    s[i] = athermal_strength(p, T) + s_for + s_deb;
  }
  return s;
}

SlipRate slip_rate(double tau, double s, const SlipFamilyParams& p, double T) {
  const double kt = p.k_B * T;
  const double pref = 0.5 * p.rho_m * p.nu_id * p.b * p.b;
  double x = ((std::abs(tau) - s) * kMPa * p.dV - p.dF) / kt;
  SlipRate r;
  if (x > kFlowExponentCap) {
    x = kFlowExponentCap;
    r.clamp_hit = true;
  }
  const double mag = pref * std::exp(x);
  // At tau = 0 the rate vanishes but the one-sided slope is kept for Newton.
  r.dgamma_dtau = mag * kMPa * p.dV / kt;
  r.gamma_dot = tau > 0.0 ? mag : (tau < 0.0 ? -mag : 0.0);
  return r;
}

double k2_of(const SlipFamilyParams& p, double gamma_dot, double T) {
  const double base = p.k1 * p.chi * p.b / p.g;
  const double rate = std::abs(gamma_dot);
  if (!(rate > 0.0)) return base;
  const double drag = p.k_B * T / (p.D * kMPa * p.b * p.b * p.b);
  return std::max(0.0, base * (1.0 - drag * std::log(rate / p.eps_dot_0)));
}

SlipState evolve_dislocations(const SlipState& state, std::span<const double> dgamma,
                              std::span<const std::int8_t> tau_sign,
                              std::span<const SlipFamilyParams* const> params,
                              std::span<const double> k2) {
  SlipState st = state;
  const int n = st.n_systems();
  double max_slip = 0.0;
  for (int s = 0; s < n; ++s) {
    if (!std::isfinite(dgamma[s]))
      throw Error(ErrorCode::NonPhysicalDensity, "slip increment is not finite");
    max_slip = std::max(max_slip, std::abs(dgamma[s]));
  }
  if (max_slip == 0.0) return st;

  std::vector<int> sign(n, 0);
  for (int s = 0; s < n; ++s) {
    if (dgamma[s] == 0.0) continue;
    sign[s] = tau_sign[s] != 0 ? tau_sign[s] : (dgamma[s] > 0.0 ? 1 : -1);
    if (st.last_sign[s] != 0 && st.last_sign[s] != sign[s]) st.rho0[s] = st.rho_for(s);
    st.last_sign[s] = static_cast<std::int8_t>(sign[s]);
    st.gamma_acc[s] += std::abs(dgamma[s]);
  }

  const int nsub = static_cast<int>(std::ceil(max_slip / kMaxSubstepSlip));
  for (int k = 0; k < nsub; ++k) {
    double d_deb = 0.0;
    const double sq_deb = std::sqrt(st.rho_deb);
    for (int s = 0; s < n; ++s) {
      if (sign[s] == 0) continue;
      const SlipFamilyParams& p = *params[s];
      const double a = std::abs(dgamma[s]) / nsub;
      const double rf = st.rho_for(s);
      const double sq = std::sqrt(rf);
      double& gen = sign[s] > 0 ? st.rho_rev_plus[s] : st.rho_rev_minus[s];
      double& opp = sign[s] > 0 ? st.rho_rev_minus[s] : st.rho_rev_plus[s];
      const double ratio = st.rho0[s] > 0.0 ? std::pow(opp / st.rho0[s], p.m_hat) : 0.0;
      const double d_fwd = ((1.0 - p.p) * p.k1 * sq - k2[s] * rf) * a;
      const double d_gen = (p.p * p.k1 * sq - k2[s] * gen) * a;
      const double d_opp = -p.k1 * sq * ratio * a;
      d_deb += p.q * p.b * sq_deb * k2[s] * rf * a;
      st.rho_fwd[s] = std::max(0.0, st.rho_fwd[s] + d_fwd);
      gen = std::max(0.0, gen + d_gen);
      opp = std::max(0.0, opp + d_opp);
    }
    st.rho_deb = std::max(0.0, st.rho_deb + d_deb);
  }

  for (int s = 0; s < n; ++s)
    if (!std::isfinite(st.rho_for(s)))
      throw Error(ErrorCode::NonPhysicalDensity, "dislocation density became NaN");
  if (!std::isfinite(st.rho_deb))
    throw Error(ErrorCode::NonPhysicalDensity, "debris density became NaN");
  return st;
}

CrystalKernel::CrystalKernel(const MaterialDB& db, const GrainRecord& grain)
    : phase_(grain.phase), rotation_(grain.orientation.rotation()) {
  const PhaseProperties& ph = db.phase(phase_);
  auto data = std::make_shared<Data>();
  data->elastic = ph.elastic;
  data->families = db.families;
  alpha_ = voigt::strain_from_tensor(rotation_ * ph.alpha * rotation_.transpose());
  z_.reserve(ph.systems.size());
  data->params.reserve(ph.systems.size());
  for (const SlipSystem& sys : ph.systems) {
    z_.push_back(voigt::schmid_vector(rotation_ * sys.Z * rotation_.transpose()));
    data->params.push_back(&data->families[static_cast<int>(sys.family)]);
  }
  data_ = std::move(data);
}

Mat6 CrystalKernel::stiffness(double T) const {
  return voigt::rotate_stiffness(stiffness_at(data_->elastic, T), rotation_);
}

double CrystalKernel::shear_modulus(double T) const {
  return ehm::shear_modulus(stiffness_at(data_->elastic, T));
}

std::vector<double> CrystalKernel::strength(const SlipState& st, double T) const {
  return slip_strength(st, data_->params, T, shear_modulus(T));
}

FlowResult CrystalKernel::flow(const Vec6& sigma, std::span<const double> strength, double T,
                               double dt) const {
  g_flow_calls.fetch_add(1, std::memory_order_relaxed);
  FlowResult r;
  double mu = -1.0;
  for (std::size_t s = 0; s < z_.size(); ++s) {
    const double tau = sigma.dot(z_[s]);
    const SlipRate k = slip_rate(tau, strength[s], *data_->params[s], T);
    r.dmu.noalias() += (dt * k.gamma_dot) * z_[s];
    r.G.noalias() += (dt * k.dgamma_dtau) * z_[s] * z_[s].transpose();
    r.clamp_hit = r.clamp_hit || k.clamp_hit;
    // |gamma_dot(tau)| >= gamma_dot(0+), so the first test is a cheap superset.
    if (tau == 0.0 || k.clamp_hit) continue;
    if (mu < 0.0) mu = shear_modulus(T);
    if (std::abs(tau) > 10.0 * mu * dt * std::abs(k.gamma_dot)) continue;
    const double step0 =
        dt * slip_rate(std::numeric_limits<double>::min(), strength[s], *data_->params[s], T).gamma_dot;
    if (std::abs(tau) <= 10.0 * mu * step0) r.jump.noalias() += step0 * z_[s].cwiseAbs();
  }
  return r;
}

SlipState CrystalKernel::advance(const SlipState& st, const Vec6& sigma,
                                 std::span<const double> strength, double T, double dt) const {
  const std::size_t n = z_.size();
  std::vector<double> dgamma(n), k2(n);
  std::vector<std::int8_t> sign(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double tau = sigma.dot(z_[s]);
    const SlipFamilyParams& p = *data_->params[s];
    const double rate = slip_rate(tau, strength[s], p, T).gamma_dot;
    dgamma[s] = rate * dt;
    sign[s] = tau > 0.0 ? 1 : (tau < 0.0 ? -1 : 0);
    k2[s] = k2_of(p, rate, T);
  }
  return evolve_dislocations(st, dgamma, sign, data_->params, k2);
}

}  // namespace ehm
