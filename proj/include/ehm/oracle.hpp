#pragma once

#include <memory>
#include <vector>

#include "ehm/constitutive.hpp"
#include "ehm/ehm_core.hpp"
#include "ehm/fe.hpp"

namespace ehm {

// Reference solvers used to check the reduced model.

struct GaussState {
  Vec6 eps = Vec6::Zero();
  Vec6 mu = Vec6::Zero();
  Vec6 sigma = Vec6::Zero();
  Vec6 mu_rate = Vec6::Zero();
  SlipState slip;
};

struct FullFieldState {
  Eigen::VectorXd u;               // periodic fluctuation, free dofs
  std::vector<GaussState> gp;      // element-major, 8 per element
  Vec6 eps_bar = Vec6::Zero();
  Vec6 sigma_bar = Vec6::Zero();
  Vec6 eps_bar_rate = Vec6::Zero();
  double T = 298.0;
  double T_ref = 298.0;
  double time = 0.0;
};

// Full-field periodic crystal-plasticity FE on the voxel mesh: every Gauss
// point runs the same CrystalKernel as the reduced model.
class FullFieldModel {
 public:
  static constexpr int kMaxElements = 4096;

  FullFieldModel(const Microstructure& micro, const MaterialDB& db);

  const VoxelMesh& mesh() const { return mesh_; }
  NewtonSettings& settings() { return settings_; }

  FullFieldState initial_state(double T, double T_ref) const;
  FullFieldState initial_state(double T) const { return initial_state(T, T); }

  // Implicit increment under mixed macro control, with bisection on failure.
  FullFieldState advance(const FullFieldState& state, const IncrementControl& control,
                         StepInfo* info = nullptr) const;

  // Average stress recovered from nodal forces through the virtual work of
  // affine displacement fields.
  Vec6 reaction_stress(const FullFieldState& state) const;

  // Per-grain volume-averaged stress.
  std::vector<Vec6> grain_stress(const FullFieldState& state) const;

 private:
  FullFieldState solve(const FullFieldState& st, const IncrementControl& c, StepInfo& info) const;
  FullFieldState advance_depth(const FullFieldState& st, const IncrementControl& c,
                               StepInfo& info, int depth) const;

  VoxelMesh mesh_;
  std::vector<int> grain_of_;
  std::vector<CrystalKernel> kernels_;
  int n_grains_;
  NewtonSettings settings_;
};

// Coefficient tensors of the uniform-strain (Taylor) model: A = I, P = 0,
// thermal term 0, M = grain compliance. Run through EhmModel.
CoefficientTensorSet taylor_tensors(const Microstructure& micro, const MaterialDB& db,
                                    const std::vector<double>& T_base);

}  // namespace ehm
