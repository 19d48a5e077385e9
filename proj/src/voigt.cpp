#include "ehm/voigt.hpp"

#include "ehm/error.hpp"

namespace ehm {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InfeasiblePartition: return "InfeasiblePartition";
    case ErrorCode::OutOfRangeTemperature: return "OutOfRangeTemperature";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::NonPhysicalDensity: return "NonPhysicalDensity";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NoPairs: return "NoPairs";
    case ErrorCode::InfeasibleBounds: return "InfeasibleBounds";
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

namespace voigt {

Vec6 stress_from_tensor(const Mat3& s) {
  Vec6 v;
  for (int k = 0; k < 6; ++k) v(k) = 0.5 * (s(kRow[k], kCol[k]) + s(kCol[k], kRow[k]));
  return v;
}

Mat3 stress_to_tensor(const Vec6& v) {
  Mat3 s;
  for (int k = 0; k < 6; ++k) {
    s(kRow[k], kCol[k]) = v(k);
    s(kCol[k], kRow[k]) = v(k);
  }
  return s;
}

Vec6 strain_from_tensor(const Mat3& e) {
  Vec6 v;
  for (int k = 0; k < 3; ++k) v(k) = e(k, k);
  for (int k = 3; k < 6; ++k) v(k) = e(kRow[k], kCol[k]) + e(kCol[k], kRow[k]);
  return v;
}

Mat3 strain_to_tensor(const Vec6& v) {
  Mat3 e;
  for (int k = 0; k < 3; ++k) e(k, k) = v(k);
  for (int k = 3; k < 6; ++k) {
    e(kRow[k], kCol[k]) = 0.5 * v(k);
    e(kCol[k], kRow[k]) = 0.5 * v(k);
  }
  return e;
}

Vec6 schmid_vector(const Mat3& z) { return strain_from_tensor(z); }

Mat6 stress_rotation(const Mat3& r) {
  // sigma'_{ij} = R_ik R_jl sigma_kl, gathered per Voigt pair.
  Mat6 t = Mat6::Zero();
  for (int a = 0; a < 6; ++a) {
    const int i = kRow[a], j = kCol[a];
    for (int b = 0; b < 6; ++b) {
      const int k = kRow[b], l = kCol[b];
      t(a, b) = (b < 3) ? r(i, k) * r(j, l) : r(i, k) * r(j, l) + r(i, l) * r(j, k);
    }
  }
  return t;
}

Mat6 rotate_stiffness(const Mat6& c, const Mat3& r) {
  const Mat6 t = stress_rotation(r);
  return t * c * t.transpose();
}

double strain_contraction(const Vec6& e) {
  return e.head<3>().squaredNorm() + 0.5 * e.tail<3>().squaredNorm();
}

}  // namespace voigt
}  // namespace ehm
