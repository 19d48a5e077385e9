#include "ehm/fe.hpp"

#include <Eigen/CholmodSupport>
#include <cmath>

#include "ehm/error.hpp"

namespace ehm {

VoxelMesh::VoxelMesh(Dims dims) : dims_(dims) {
  for (int d : dims_)
    if (d <= 0) throw Error(ErrorCode::InvalidInput, "mesh dimensions must be positive");
  const Vec3 h(1.0 / dims_[0], 1.0 / dims_[1], 1.0 / dims_[2]);
  volume_ = h.prod();
  weight_ = volume_ / kGauss;  // 2x2x2 Gauss weights are 1, det J = V / 8

  const double g = 1.0 / std::sqrt(3.0);
  bbar_.setZero();
  for (int gp = 0; gp < kGauss; ++gp) {
    const double xi[3] = {(gp & 1) ? g : -g, (gp & 2) ? g : -g, (gp & 4) ? g : -g};
    BMatrix& b = b_[gp];
    b.setZero();
    for (int a = 0; a < 8; ++a) {
      const double s[3] = {(a & 1) ? 1.0 : -1.0, (a & 2) ? 1.0 : -1.0, (a & 4) ? 1.0 : -1.0};
      Vec3 dn;
      for (int k = 0; k < 3; ++k) {
        double v = 0.125 * s[k];
        for (int j = 0; j < 3; ++j)
          if (j != k) v *= 1.0 + s[j] * xi[j];
        dn(k) = v * 2.0 / h(k);
      }
      const int c = 3 * a;
      b(0, c) = dn(0);
      b(1, c + 1) = dn(1);
      b(2, c + 2) = dn(2);
      b(3, c + 1) = dn(2);
      b(3, c + 2) = dn(1);
      b(4, c) = dn(2);
      b(4, c + 2) = dn(0);
      b(5, c) = dn(1);
      b(5, c + 1) = dn(0);
    }
    bbar_ += b / kGauss;
  }

  dofs_.resize(n_elements());
  for (int ez = 0; ez < dims_[2]; ++ez)
    for (int ey = 0; ey < dims_[1]; ++ey)
      for (int ex = 0; ex < dims_[0]; ++ex) {
        const int e = ex + dims_[0] * (ey + dims_[1] * ez);
        for (int a = 0; a < 8; ++a) {
          const int nx = (ex + (a & 1)) % dims_[0];
          const int ny = (ey + ((a >> 1) & 1)) % dims_[1];
          const int nz = (ez + ((a >> 2) & 1)) % dims_[2];
          const int node = nx + dims_[0] * (ny + dims_[1] * nz);
          for (int c = 0; c < 3; ++c) dofs_[e][3 * a + c] = node == 0 ? -1 : 3 * node + c - 3;
        }
      }
}

ElementMatrix VoxelMesh::element_stiffness(const Mat6& stiffness) const {
  ElementMatrix k = ElementMatrix::Zero();
  for (const auto& b : b_) k.noalias() += weight_ * b.transpose() * stiffness * b;
  return k;
}

Vec6 VoxelMesh::element_strain(int e, const Eigen::VectorXd& u) const {
  Eigen::Matrix<double, 24, 1> ue;
  const auto& d = dofs_[e];
  for (int i = 0; i < 24; ++i) ue(i) = d[i] < 0 ? 0.0 : u(d[i]);
  return bbar_ * ue;
}

SparseMatrix assemble(const VoxelMesh& mesh, const std::vector<const ElementMatrix*>& ke) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(mesh.n_elements()) * 300);
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const auto& d = mesh.element_dofs(e);
    const ElementMatrix& k = *ke[e];
    for (int i = 0; i < 24; ++i) {
      if (d[i] < 0) continue;
      for (int j = 0; j < 24; ++j) {
        if (d[j] < 0 || d[j] > d[i]) continue;  // lower triangle
        trips.emplace_back(d[i], d[j], k(i, j));
      }
    }
  }
  SparseMatrix m(mesh.n_dofs(), mesh.n_dofs());
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

struct SpdSolver::Impl {
  Eigen::CholmodSimplicialLLT<SparseMatrix, Eigen::Lower> llt;
};

SpdSolver::SpdSolver(const SparseMatrix& m) : impl_(std::make_unique<Impl>()), n_(m.rows()) {
  impl_->llt.compute(m);
  if (impl_->llt.info() != Eigen::Success)
    throw Error(ErrorCode::SingularSystem, "sparse factorization failed (matrix not SPD)");
}

SpdSolver::~SpdSolver() = default;

Eigen::MatrixXd SpdSolver::solve(const Eigen::MatrixXd& rhs) const {
  Eigen::MatrixXd x = impl_->llt.solve(rhs);
  if (impl_->llt.info() != Eigen::Success)
    throw Error(ErrorCode::SingularSystem, "sparse solve failed");
  return x;
}

}  // namespace ehm
