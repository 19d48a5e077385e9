#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "ehm/fe.hpp"
#include "ehm/material.hpp"
#include "ehm/microstructure.hpp"

namespace ehm {

// Coefficient tensors at one temperature. P is stored row-major over part
// pairs: P[beta * n + alpha] maps part-alpha eigenstrain to part-beta strain.
struct CoefficientSlab {
  std::vector<Mat6> A;
  std::vector<Mat6> P;
  std::vector<Mat6> M;
  std::vector<Vec6> Ath;

  const Mat6& p(int beta, int alpha) const { return P[beta * A.size() + alpha]; }
};

struct CoefficientTensorSet {
  int n_parts = 0;
  std::vector<double> T_base;
  std::vector<CoefficientSlab> slabs;
  std::vector<double> C;

  // Component-wise piecewise-linear in T; exact slab at a base temperature.
  CoefficientSlab interpolate(double T) const;
};

// Periodic linear-elastic problem on the voxel RVE with piecewise-constant
// (per-grain) stiffness. Factorized once; every load is a right-hand side.
class InfluenceProblem {
 public:
  InfluenceProblem(const VoxelRve& rve, std::vector<Mat6> grain_stiffness);

  const VoxelMesh& mesh() const { return mesh_; }
  int n_parts() const { return n_parts_; }

  // Part averages of the fluctuation strain for the six unit macro strains:
  // column k of entry beta is the response to e_k.
  std::vector<Mat6> solve_elastic() const;
  // P^(beta alpha) for all pairs, ordered as in CoefficientSlab.
  std::vector<Mat6> solve_inelastic() const;
  // Part-average strain for a unit temperature rise with per-part expansion
  // (engineering Voigt, sample frame).
  std::vector<Vec6> solve_thermal(const std::vector<Vec6>& alpha) const;

  // Part averages (6n x k) of the strain response to element-wise eigenstrain
  // fields; column j of `eigenstrain` holds 6 components per element.
  Eigen::MatrixXd solve_eigenstrain(const Eigen::MatrixXd& eigenstrain) const;

  // Full displacement solutions (free dofs) for element-wise eigenstrains.
  Eigen::MatrixXd displacements(const Eigen::MatrixXd& eigenstrain) const;

 private:
  Eigen::MatrixXd part_averages(const Eigen::MatrixXd& u) const;
  Eigen::MatrixXd rhs_for(const Eigen::MatrixXd& eigenstrain) const;

  VoxelMesh mesh_;
  int n_parts_;
  std::vector<int> part_of_;
  std::vector<int> count_;
  std::vector<Mat6> stiffness_;
  std::unique_ptr<SpdSolver> solver_;
};

// Solves all influence problems at every base temperature (sorted ascending).
CoefficientTensorSet assemble_set(const Microstructure& micro, const MaterialDB& db,
                                  const std::vector<double>& T_base);

void write_cache(const std::filesystem::path& path, const CoefficientTensorSet& set);
CoefficientTensorSet read_cache(const std::filesystem::path& path);

}  // namespace ehm
