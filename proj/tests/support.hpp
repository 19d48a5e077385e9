#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ehm/material.hpp"
#include "ehm/microstructure.hpp"

#ifndef EHM_TEST_DATA_DIR
#error "EHM_TEST_DATA_DIR must point at tests/data"
#endif

namespace ehm::test {

inline std::filesystem::path data_dir() { return EHM_TEST_DATA_DIR; }

// Slip barriers raised so that flow starts well above zero stress.
inline MaterialDB verification_material() {
  return load_material(data_dir() / "verification.yaml");
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("ehm_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline EulerAngles random_euler(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double two_pi = 2.0 * std::acos(-1.0);
  return {two_pi * u(rng), std::acos(2.0 * u(rng) - 1.0), two_pi * u(rng)};
}

// Grains laid out by an explicit voxel map.
inline Microstructure make_micro(Dims dims, std::vector<std::int32_t> ids, int n,
                                 std::vector<GrainRecord> grains) {
  Microstructure m;
  m.rve = VoxelRve(dims, std::move(ids), n);
  m.grains = std::move(grains);
  return m;
}

// Two grains split at x = nx/2 (a laminate normal to x).
inline Microstructure two_grain_split(int n, const GrainRecord& a, const GrainRecord& b) {
  std::vector<std::int32_t> ids(n * n * n);
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) ids[x + n * (y + n * z)] = x < n / 2 ? 0 : 1;
  return make_micro({n, n, n}, std::move(ids), 2, {a, b});
}

inline Microstructure single_grain(int n, const GrainRecord& g) {
  return make_micro({n, n, n}, std::vector<std::int32_t>(n * n * n, 0), 1, {g});
}

inline double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace ehm::test
