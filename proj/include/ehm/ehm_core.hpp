#pragma once

#include <array>
#include <memory>
#include <vector>

#include "ehm/constitutive.hpp"
#include "ehm/influence.hpp"

namespace ehm {

struct PartState {
  Vec6 eps = Vec6::Zero();      // total strain (engineering Voigt)
  Vec6 mu = Vec6::Zero();       // inelastic strain
  Vec6 sigma = Vec6::Zero();    // MPa
  Vec6 mu_rate = Vec6::Zero();  // last converged d(mu)/dt, seeds the next Newton solve
  SlipState slip;
};

struct PointState {
  std::vector<PartState> parts;
  Vec6 eps_bar = Vec6::Zero();
  Vec6 sigma_bar = Vec6::Zero();
  Vec6 eps_bar_rate = Vec6::Zero();
  double T = 298.0;
  double T_ref = 298.0;  // stress-free temperature of the thermal strain
  double time = 0.0;
};

// One increment of macro loading. Strain-controlled components carry the
// strain increment in `value`; stress-controlled ones carry the target stress
// at the end of the increment.
struct IncrementControl {
  double dt = 1.0;
  double dT = 0.0;
  std::array<bool, 6> stress_controlled{};
  Vec6 value = Vec6::Zero();

  static IncrementControl strain(const Vec6& d_eps_bar, double dT, double dt);
  bool any_stress() const;
};

struct StepInfo {
  int newton_iterations = 0;
  int bisections = 0;
  bool clamp_hit = false;
};

struct NewtonSettings {
  int max_iterations = 50;
  int max_bisections = 4;
  double rel_tol = 1.0e-8;
  double abs_tol = 1.0e-10;  // MPa
  double mixed_rel_tol = 1.0e-8;
  int max_outer_iterations = 30;
};

// The implicit system of one increment, with the stacked part inelastic strain
// increments x = [dmu^(1); ...; dmu^(n)] as unknowns. Exposed so tests can
// check the Jacobian against finite differences.
class LocalSystem {
 public:
  LocalSystem(const std::vector<CrystalKernel>& kernels, const CoefficientSlab& slab,
              std::vector<Vec6> base, std::vector<std::vector<double>> strength, double T,
              double dt);

  int n_parts() const { return static_cast<int>(base_.size()); }
  const Mat6& stiffness(int a) const { return L_[a]; }
  const std::vector<Vec6>& base() const { return base_; }

  Vec6 stress(const Eigen::VectorXd& x, int a) const;
  // R = x - dmu(sigma(x)); fills per-part G and the stacked sgn(tau) jump
  // allowance (see FlowResult::jump) when requested.
  Eigen::VectorXd residual(const Eigen::VectorXd& x, std::vector<Mat6>* G = nullptr,
                           bool* clamp = nullptr, Eigen::VectorXd* jump = nullptr) const;
  Eigen::MatrixXd jacobian(const std::vector<Mat6>& G) const;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const;
  // Stress-scaled residual norm, the convergence measure.
  double scaled_norm(const Eigen::VectorXd& r) const;

 private:
  const std::vector<CrystalKernel>& kernels_;
  const CoefficientSlab& slab_;
  std::vector<Mat6> L_;
  std::vector<Vec6> base_;
  std::vector<std::vector<double>> strength_;
  double T_;
  double dt_;
};

class EhmModel {
 public:
  EhmModel(const Microstructure& micro, const MaterialDB& db,
           std::shared_ptr<const CoefficientTensorSet> tensors);

  int n_parts() const { return static_cast<int>(kernels_.size()); }
  const std::vector<CrystalKernel>& kernels() const { return kernels_; }
  const CoefficientTensorSet& tensors() const { return *tensors_; }
  const std::vector<double>& volume_fractions() const { return tensors_->C; }
  NewtonSettings& settings() { return settings_; }

  // Stress-free state at temperature T (thermal strain measured from T_ref).
  PointState initial_state(double T, double T_ref) const;
  PointState initial_state(double T) const { return initial_state(T, T); }

  // Mixed-control increment with step bisection on failure.
  PointState advance(const PointState& state, const IncrementControl& control,
                     StepInfo* info = nullptr) const;

  // Strain-controlled increment, no bisection.
  PointState step(const PointState& state, const IncrementControl& control,
                  StepInfo* info = nullptr) const;

  // Builds the implicit system of an increment from `state` with macro strain
  // increment d_eps_bar; `slab` must be interpolated at state.T + dT.
  LocalSystem local_system(const PointState& state, const CoefficientSlab& slab,
                           const Vec6& d_eps_bar, double dT, double dt) const;

 private:
  struct Solved;
  Solved solve_strain(const PointState& state, const CoefficientSlab& slab, const Vec6& d_eps_bar,
                      double dT, double dt, bool want_tangent) const;
  PointState solve_mixed(const PointState& state, const IncrementControl& c,
                         StepInfo& info) const;
  PointState advance_depth(const PointState& state, const IncrementControl& c, StepInfo& info,
                           int depth) const;

  std::vector<CrystalKernel> kernels_;
  std::shared_ptr<const CoefficientTensorSet> tensors_;
  NewtonSettings settings_;
};

struct Homogenized {
  Vec6 sigma_bar = Vec6::Zero();
  Vec6 eps_bar_p = Vec6::Zero();
  double eps_eqp = 0.0;
};

Homogenized homogenize(const PointState& state, const std::vector<double>& C);

// sqrt(2/3 e:e) of an engineering-Voigt strain.
double equivalent_strain(const Vec6& e);

}  // namespace ehm
