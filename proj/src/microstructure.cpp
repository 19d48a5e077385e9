#include "ehm/microstructure.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "ehm/error.hpp"
#include "rng.hpp"

namespace ehm {

const char* to_string(Phase p) noexcept {
  return p == Phase::HcpAlpha ? "HCP_alpha" : "BCC_beta";
}

Phase phase_from_string(const std::string& s) {
  if (s == "HCP_alpha") return Phase::HcpAlpha;
  if (s == "BCC_beta") return Phase::BccBeta;
  throw Error(ErrorCode::InvalidInput, "unknown phase '" + s + "'");
}

Mat3 EulerAngles::rotation() const {
  const Mat3 z1 = Eigen::AngleAxisd(phi1, Vec3::UnitZ()).toRotationMatrix();
  const Mat3 x = Eigen::AngleAxisd(Phi, Vec3::UnitX()).toRotationMatrix();
  const Mat3 z2 = Eigen::AngleAxisd(phi2, Vec3::UnitZ()).toRotationMatrix();
  return z1 * x * z2;
}

double& EulerAngles::operator[](int i) { return i == 0 ? phi1 : (i == 1 ? Phi : phi2); }
double EulerAngles::operator[](int i) const { return i == 0 ? phi1 : (i == 1 ? Phi : phi2); }

VoxelRve::VoxelRve(Dims dims, std::vector<std::int32_t> grain_id, int n_grains)
    : dims_(dims), grain_id_(std::move(grain_id)), n_grains_(n_grains) {
  for (int d : dims_)
    if (d <= 0) throw Error(ErrorCode::InvalidInput, "RVE dimensions must be positive");
  if (static_cast<int>(grain_id_.size()) != n_voxels())
    throw Error(ErrorCode::InvalidInput, "grain map size does not match dimensions");
  if (n_grains_ <= 0) throw Error(ErrorCode::InvalidInput, "RVE needs at least one grain");
  std::vector<int> counts(n_grains_, 0);
  for (auto g : grain_id_) {
    if (g < 0 || g >= n_grains_)
      throw Error(ErrorCode::InvalidInput, "grain id out of range: " + std::to_string(g));
    ++counts[g];
  }
  for (int g = 0; g < n_grains_; ++g)
    if (counts[g] == 0)
      throw Error(ErrorCode::InvalidInput, "grain " + std::to_string(g) + " has no voxels");
}

Vec3 VoxelRve::spacing() const {
  return Vec3(1.0 / dims_[0], 1.0 / dims_[1], 1.0 / dims_[2]);
}

std::vector<int> VoxelRve::grain_voxel_counts() const {
  std::vector<int> counts(n_grains_, 0);
  for (auto g : grain_id_) ++counts[g];
  return counts;
}

std::vector<double> VoxelRve::volume_fractions() const {
  const auto counts = grain_voxel_counts();
  std::vector<double> c(n_grains_);
  const double n = n_voxels();
  for (int g = 0; g < n_grains_; ++g) c[g] = counts[g] / n;
  return c;
}

namespace {

double periodic_gap(double a, double b) {
  double d = std::abs(a - b);
  return std::min(d, 1.0 - d);
}

}  // namespace

Microstructure build_synthetic_rve(Dims dims, int n_grains, std::uint64_t seed,
                                   const TextureSpec& texture) {
  for (int d : dims)
    if (d <= 0) throw Error(ErrorCode::InvalidInput, "RVE dimensions must be positive");
  const long n_vox = static_cast<long>(dims[0]) * dims[1] * dims[2];
  if (n_grains <= 0) throw Error(ErrorCode::InvalidInput, "n_grains must be positive");
  if (n_grains > n_vox)
    throw Error(ErrorCode::InfeasiblePartition,
                "cannot place " + std::to_string(n_grains) + " grains in " +
                    std::to_string(n_vox) + " voxels");

  detail::Rng rng(seed);

  // Partial Fisher-Yates: distinct seed voxels.
  std::vector<int> order(n_vox);
  std::iota(order.begin(), order.end(), 0);
  for (int g = 0; g < n_grains; ++g) {
    const auto j = g + static_cast<long>(rng.below(n_vox - g));
    std::swap(order[g], order[j]);
  }

  auto centre = [&](int v) {
    const int x = v % dims[0];
    const int y = (v / dims[0]) % dims[1];
    const int z = v / (dims[0] * dims[1]);
    return Vec3((x + 0.5) / dims[0], (y + 0.5) / dims[1], (z + 0.5) / dims[2]);
  };

  std::vector<Vec3> seeds(n_grains);
  for (int g = 0; g < n_grains; ++g) seeds[g] = centre(order[g]);

  std::vector<std::int32_t> ids(n_vox);
  for (int v = 0; v < n_vox; ++v) {
    const Vec3 p = centre(v);
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (int g = 0; g < n_grains; ++g) {
      double d2 = 0.0;
      for (int k = 0; k < 3; ++k) {
        const double d = periodic_gap(p(k), seeds[g](k));
        d2 += d * d;
      }
      if (d2 < best) {
        best = d2;
        arg = g;
      }
    }
    ids[v] = arg;
  }

  Microstructure m;
  m.seed = seed;
  m.rve = VoxelRve(dims, std::move(ids), n_grains);
  m.grains.resize(n_grains);
  for (auto& g : m.grains) {
    if (texture.kind == TextureSpec::Kind::Random) {
      g.orientation.phi1 = 2.0 * std::numbers::pi * rng.uniform();
      g.orientation.Phi = std::acos(std::clamp(2.0 * rng.uniform() - 1.0, -1.0, 1.0));
      g.orientation.phi2 = 2.0 * std::numbers::pi * rng.uniform();
    } else {
      g.orientation = texture.fixed;
    }
    g.phase = rng.uniform() < texture.beta_fraction ? Phase::BccBeta : Phase::HcpAlpha;
  }
  return m;
}

std::vector<GrainRecord> rotate_texture(const std::vector<GrainRecord>& grains,
                                        int component, double shift) {
  if (component < 0 || component > 2)
    throw Error(ErrorCode::InvalidInput, "Euler component must be 0, 1 or 2");
  std::vector<GrainRecord> out = grains;
  for (auto& g : out) g.orientation[component] += shift;
  return out;
}

AdjacencyGraph adjacency(const VoxelRve& rve) {
  const auto& d = rve.dims();
  AdjacencyGraph graph;
  graph.neighbors.resize(rve.n_grains());
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        const int a = rve.grain_at(x, y, z);
        const int face[3] = {rve.grain_at((x + 1) % d[0], y, z),
                             rve.grain_at(x, (y + 1) % d[1], z),
                             rve.grain_at(x, y, (z + 1) % d[2])};
        for (int b : face) {
          if (a == b) continue;
          graph.neighbors[a].push_back(b);
          graph.neighbors[b].push_back(a);
        }
      }
  for (auto& n : graph.neighbors) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  return graph;
}

// File layout:
//   EHM-RVE 1
//   dims nx ny nz
//   n_grains n
//   seed s
//   convention BUNGE-ZXZ
//   voxels
//   <grain ids, x fastest>
//   grains
//   <id phase phi1 Phi phi2>   (one line per grain)
void write_rve(const std::filesystem::path& path, const Microstructure& m) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  const auto& d = m.rve.dims();
  out << "EHM-RVE 1\n";
  out << "dims " << d[0] << ' ' << d[1] << ' ' << d[2] << '\n';
  out << "n_grains " << m.rve.n_grains() << '\n';
  out << "seed " << m.seed << '\n';
  out << "convention BUNGE-ZXZ\n";
  out << "voxels\n";
  const auto& ids = m.rve.grain_ids();
  for (std::size_t v = 0; v < ids.size(); ++v)
    out << ids[v] << (((v + 1) % d[0] == 0) ? '\n' : ' ');
  out << "grains\n";
  out << std::setprecision(17);
  for (std::size_t g = 0; g < m.grains.size(); ++g) {
    const auto& r = m.grains[g];
    out << g << ' ' << to_string(r.phase) << ' ' << r.orientation.phi1 << ' '
        << r.orientation.Phi << ' ' << r.orientation.phi2 << '\n';
  }
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

Microstructure read_rve(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  auto expect = [&](const std::string& word) {
    std::string tok;
    if (!(in >> tok) || tok != word)
      throw Error(ErrorCode::InvalidInput,
                  path.string() + ": expected '" + word + "', got '" + tok + "'");
  };
  int version = 0;
  expect("EHM-RVE");
  in >> version;
  if (version != 1) throw Error(ErrorCode::InvalidInput, "unsupported RVE version");
  Dims dims{};
  int n = 0;
  Microstructure m;
  std::string convention;
  expect("dims");
  in >> dims[0] >> dims[1] >> dims[2];
  expect("n_grains");
  in >> n;
  expect("seed");
  in >> m.seed;
  expect("convention");
  in >> convention;
  if (convention != "BUNGE-ZXZ")
    throw Error(ErrorCode::InvalidInput, "unsupported orientation convention " + convention);
  expect("voxels");
  if (!in || dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0 || n <= 0)
    throw Error(ErrorCode::InvalidInput, path.string() + ": malformed header");
  std::vector<std::int32_t> ids(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
  for (auto& id : ids)
    if (!(in >> id)) throw Error(ErrorCode::InvalidInput, path.string() + ": truncated voxels");
  expect("grains");
  m.grains.resize(n);
  for (int g = 0; g < n; ++g) {
    int id;
    std::string phase;
    EulerAngles e;
    if (!(in >> id >> phase >> e.phi1 >> e.Phi >> e.phi2) || id < 0 || id >= n)
      throw Error(ErrorCode::InvalidInput, path.string() + ": bad grain record");
    if (!std::isfinite(e.phi1) || !std::isfinite(e.Phi) || !std::isfinite(e.phi2))
      throw Error(ErrorCode::InvalidInput, "non-finite Euler angle");
    m.grains[id] = {e, phase_from_string(phase)};
  }
  m.rve = VoxelRve(dims, std::move(ids), n);
  return m;
}

}  // namespace ehm
