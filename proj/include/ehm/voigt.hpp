#pragma once

// Voigt conventions used throughout: component order (11, 22, 33, 23, 13, 12).
// Strain-like vectors carry engineering shear (2*e23, 2*e13, 2*e12); stress-like
// vectors carry tensor components. A 6x6 stiffness maps strain to stress.

#include <Eigen/Dense>

namespace ehm {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

namespace voigt {

inline constexpr int kRow[6] = {0, 1, 2, 1, 0, 0};
inline constexpr int kCol[6] = {0, 1, 2, 2, 2, 1};

Vec6 stress_from_tensor(const Mat3& s);
Mat3 stress_to_tensor(const Vec6& v);
Vec6 strain_from_tensor(const Mat3& e);
Mat3 strain_to_tensor(const Vec6& v);

// Engineering-form strain vector of sym(Z). With this, tau = sigma . z and the
// plastic strain increment is dgamma * z in the same Voigt space.
Vec6 schmid_vector(const Mat3& z);

// T such that sigma'_v = T sigma_v when sigma' = R sigma R^T.
Mat6 stress_rotation(const Mat3& r);

// Rotate a crystal-frame stiffness into the frame where vectors map as v' = R v.
Mat6 rotate_stiffness(const Mat6& c, const Mat3& r);

// Tensor double contraction e:e for a strain given in engineering Voigt form.
double strain_contraction(const Vec6& e);

}  // namespace voigt
}  // namespace ehm
