#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "ehm/material.hpp"
#include "ehm/microstructure.hpp"
#include "ehm/voigt.hpp"

namespace ehm {

// Dislocation state of one part. Forest density per system is the sum of the
// three reversibility buckets; debris is pooled per part.
struct SlipState {
  std::vector<double> rho_fwd;
  std::vector<double> rho_rev_plus;
  std::vector<double> rho_rev_minus;
  std::vector<double> gamma_acc;
  std::vector<double> rho0;           // forest density at the last reversal
  std::vector<std::int8_t> last_sign; // sign of tau on the last slipping increment
  double rho_deb = 0.0;

  int n_systems() const { return static_cast<int>(rho_fwd.size()); }
  double rho_for(int s) const { return rho_fwd[s] + rho_rev_plus[s] + rho_rev_minus[s]; }
};

// Initial state: rho_fwd = rho_for0, reversible buckets empty, rho0 = rho_for0.
SlipState initial_slip_state(std::span<const SlipFamilyParams* const> params);

// s0(T) = s_298K - s_hat * (1 - exp((T - T_ref_s) / T_hat)).
double athermal_strength(const SlipFamilyParams& p, double T);

// s = s0(T) + mu chi b sqrt(rho_for) + mu b k_deb sqrt(rho_deb) ln(1 / (b sqrt(rho_deb))).
std::vector<double> slip_strength(const SlipState& state,
                                  std::span<const SlipFamilyParams* const> params,
                                  double T, double mu);

struct SlipRate {
  double gamma_dot = 0.0;
  double dgamma_dtau = 0.0;  // always >= 0
  bool clamp_hit = false;
};

inline constexpr double kFlowExponentCap = 50.0;

// Thermally activated flow, odd in tau. Stresses in MPa.
SlipRate slip_rate(double tau, double s, const SlipFamilyParams& p, double T);

// Dynamic recovery coefficient from the Beyerlein-Tome relation, floored at 0.
double k2_of(const SlipFamilyParams& p, double gamma_dot, double T);

inline constexpr double kMaxSubstepSlip = 1.0e-4;

// Explicit sub-stepped update of the density ODEs for signed slip increments.
// Systems with zero increment are left alone (including their reversal record).
SlipState evolve_dislocations(const SlipState& state, std::span<const double> dgamma,
                              std::span<const std::int8_t> tau_sign,
                              std::span<const SlipFamilyParams* const> params,
                              std::span<const double> k2);

struct FlowResult {
  Vec6 dmu = Vec6::Zero();    // dt * sum gamma_dot z
  Mat6 G = Mat6::Zero();      // d(dmu)/d(sigma)
  // sgn(tau) makes the rate jump by 2 gamma_dot(0+) at tau = 0. For systems
  // close enough to zero that the jump alone could move them across it, this
  // holds dt * |gamma_dot| * |z| summed componentwise: any residual inside it
  // is consistent with some rate in [-gamma_dot(0+), gamma_dot(0+)].
  Vec6 jump = Vec6::Zero();
  bool clamp_hit = false;
};

// Number of CrystalKernel::flow evaluations in this process. Both the reduced
// model and the full-field solver go through flow(); tests use the counter to
// confirm that.
std::uint64_t kernel_invocations() noexcept;

// Constitutive kernel of one crystal (grain) in the sample frame.
class CrystalKernel {
 public:
  CrystalKernel(const MaterialDB& db, const GrainRecord& grain);

  Phase phase() const { return phase_; }
  int n_systems() const { return static_cast<int>(z_.size()); }
  const std::vector<Vec6>& schmid() const { return z_; }
  std::span<const SlipFamilyParams* const> params() const { return data_->params; }

  Mat6 stiffness(double T) const;  // sample frame, MPa
  double shear_modulus(double T) const;
  const Vec6& alpha() const { return alpha_; }  // engineering Voigt, sample frame

  SlipState initial_state() const { return initial_slip_state(data_->params); }
  std::vector<double> strength(const SlipState& st, double T) const;

  // Plastic strain increment at fixed stress over dt, and its stress derivative.
  FlowResult flow(const Vec6& sigma, std::span<const double> strength, double T,
                  double dt) const;

  // Density update after an increment has converged at stress sigma.
  SlipState advance(const SlipState& st, const Vec6& sigma, std::span<const double> strength,
                    double T, double dt) const;

 private:
  // Owned copies of the material data so kernels outlive the database.
  struct Data {
    ElasticLaw elastic;
    std::array<SlipFamilyParams, kFamilyCount> families;
    std::vector<const SlipFamilyParams*> params;
  };
  Phase phase_;
  Mat3 rotation_;
  Vec6 alpha_;
  std::vector<Vec6> z_;
  std::shared_ptr<const Data> data_;
};

}  // namespace ehm
