#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ehm/voigt.hpp"

namespace ehm {

enum class Phase { HcpAlpha, BccBeta };

const char* to_string(Phase p) noexcept;
Phase phase_from_string(const std::string& s);

// Bunge Z-X-Z angles in radians. rotation() maps crystal-frame vectors to the
// sample frame: v_sample = Rz(phi1) Rx(Phi) Rz(phi2) v_crystal.
struct EulerAngles {
  double phi1 = 0.0;
  double Phi = 0.0;
  double phi2 = 0.0;

  Mat3 rotation() const;
  double& operator[](int i);
  double operator[](int i) const;
};

struct GrainRecord {
  EulerAngles orientation;
  Phase phase = Phase::HcpAlpha;
};

using Dims = std::array<int, 3>;

// Periodic voxel grid on the unit cube; voxel index = x + nx*(y + ny*z).
class VoxelRve {
 public:
  VoxelRve() = default;
  VoxelRve(Dims dims, std::vector<std::int32_t> grain_id, int n_grains);

  const Dims& dims() const { return dims_; }
  int n_voxels() const { return dims_[0] * dims_[1] * dims_[2]; }
  int n_grains() const { return n_grains_; }
  const std::vector<std::int32_t>& grain_ids() const { return grain_id_; }
  std::int32_t grain_at(int x, int y, int z) const {
    return grain_id_[index(x, y, z)];
  }
  int index(int x, int y, int z) const { return x + dims_[0] * (y + dims_[1] * z); }
  // Voxel edge lengths; the RVE volume is 1.
  Vec3 spacing() const;

  // C^(a): voxel count of each grain over the total.
  std::vector<double> volume_fractions() const;
  std::vector<int> grain_voxel_counts() const;

 private:
  Dims dims_{0, 0, 0};
  std::vector<std::int32_t> grain_id_;
  int n_grains_ = 0;
};

struct TextureSpec {
  enum class Kind { Random, Fixed };
  Kind kind = Kind::Random;
  EulerAngles fixed;          // used when kind == Fixed
  double beta_fraction = 0.0; // probability a grain is BCC beta
};

struct Microstructure {
  VoxelRve rve;
  std::vector<GrainRecord> grains;
  std::uint64_t seed = 0;
};

// Periodic Voronoi tessellation seeded at distinct voxel centres, so every grain
// owns at least its seed voxel.
Microstructure build_synthetic_rve(Dims dims, int n_grains, std::uint64_t seed,
                                   const TextureSpec& texture = {});

// Shifts Euler component `component` (0, 1, 2) of every grain by `shift` radians.
std::vector<GrainRecord> rotate_texture(const std::vector<GrainRecord>& grains,
                                        int component, double shift);

// neighbors[i] is sorted and unique; grains are adjacent iff they share a voxel
// face under periodic wraparound.
struct AdjacencyGraph {
  std::vector<std::vector<int>> neighbors;
};

AdjacencyGraph adjacency(const VoxelRve& rve);

void write_rve(const std::filesystem::path& path, const Microstructure& m);
Microstructure read_rve(const std::filesystem::path& path);

}  // namespace ehm
