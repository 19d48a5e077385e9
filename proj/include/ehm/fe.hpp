#pragma once

#include <Eigen/Sparse>
#include <array>
#include <memory>
#include <vector>

#include "ehm/microstructure.hpp"
#include "ehm/voigt.hpp"

namespace ehm {

using BMatrix = Eigen::Matrix<double, 6, 24>;
using ElementMatrix = Eigen::Matrix<double, 24, 24>;
using SparseMatrix = Eigen::SparseMatrix<double>;

// Periodic mesh of trilinear hexahedra, one per voxel, on the unit cube.
// Periodicity is built into the node numbering (opposite faces share nodes),
// and node 0 is fully pinned to remove rigid translations.
class VoxelMesh {
 public:
  static constexpr int kGauss = 8;

  explicit VoxelMesh(Dims dims);

  const Dims& dims() const { return dims_; }
  int n_elements() const { return dims_[0] * dims_[1] * dims_[2]; }
  int n_nodes() const { return n_elements(); }
  int n_dofs() const { return 3 * n_nodes() - 3; }
  double element_volume() const { return volume_; }

  // Global free-dof index of node-local dof (0..23) of element e; -1 if pinned.
  const std::array<int, 24>& element_dofs(int e) const { return dofs_[e]; }

  const BMatrix& B(int gp) const { return b_[gp]; }
  double gauss_weight() const { return weight_; }  // includes det J
  // Element-average strain operator: (1/V_e) * integral of B.
  const BMatrix& Bbar() const { return bbar_; }

  ElementMatrix element_stiffness(const Mat6& stiffness) const;

  // Element-average strain of a free-dof vector.
  Vec6 element_strain(int e, const Eigen::VectorXd& u) const;

 private:
  Dims dims_;
  double volume_ = 0.0;
  double weight_ = 0.0;
  std::array<BMatrix, kGauss> b_;
  BMatrix bbar_;
  std::vector<std::array<int, 24>> dofs_;
};

// Symmetric positive definite sparse factorization, reused across many
// right-hand sides.
class SpdSolver {
 public:
  explicit SpdSolver(const SparseMatrix& lower_or_full);
  ~SpdSolver();
  SpdSolver(const SpdSolver&) = delete;
  SpdSolver& operator=(const SpdSolver&) = delete;

  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;
  int size() const { return n_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int n_ = 0;
};

// Assemble K = sum_e K_e with one stiffness per element (element_stiffness[e]).
SparseMatrix assemble(const VoxelMesh& mesh, const std::vector<const ElementMatrix*>& ke);

}  // namespace ehm
