#include "ehm/influence.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "ehm/constitutive.hpp"
#include "ehm/error.hpp"

namespace ehm {

namespace {

// Columns per block solve; bounds the dense right-hand-side memory.
constexpr int kChunk = 96;

}  // namespace

InfluenceProblem::InfluenceProblem(const VoxelRve& rve, std::vector<Mat6> grain_stiffness)
    : mesh_(rve.dims()),
      n_parts_(rve.n_grains()),
      part_of_(rve.grain_ids().begin(), rve.grain_ids().end()),
      count_(rve.grain_voxel_counts()),
      stiffness_(std::move(grain_stiffness)) {
  if (static_cast<int>(stiffness_.size()) != n_parts_)
    throw Error(ErrorCode::InvalidInput, "one stiffness per grain required");
  std::vector<ElementMatrix> ke(n_parts_);
  for (int a = 0; a < n_parts_; ++a) ke[a] = mesh_.element_stiffness(stiffness_[a]);
  std::vector<const ElementMatrix*> per_elem(mesh_.n_elements());
  for (int e = 0; e < mesh_.n_elements(); ++e) per_elem[e] = &ke[part_of_[e]];
  solver_ = std::make_unique<SpdSolver>(assemble(mesh_, per_elem));
}

Eigen::MatrixXd InfluenceProblem::rhs_for(const Eigen::MatrixXd& eta) const {
  const int cols = static_cast<int>(eta.cols());
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(mesh_.n_dofs(), cols);
  const double v = mesh_.element_volume();
  // Per-part V * Bbar^T L, reused for every element of the part.
  std::vector<Eigen::Matrix<double, 24, 6>> g(n_parts_);
  for (int a = 0; a < n_parts_; ++a) g[a] = v * mesh_.Bbar().transpose() * stiffness_[a];
  for (int e = 0; e < mesh_.n_elements(); ++e) {
    const auto fe = (g[part_of_[e]] * eta.middleRows(6 * e, 6)).eval();
    const auto& d = mesh_.element_dofs(e);
    for (int i = 0; i < 24; ++i)
      if (d[i] >= 0) f.row(d[i]) += fe.row(i);
  }
  return f;
}

Eigen::MatrixXd InfluenceProblem::part_averages(const Eigen::MatrixXd& u) const {
  const int cols = static_cast<int>(u.cols());
  Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(6 * n_parts_, cols);
  Eigen::Matrix<double, 24, Eigen::Dynamic> ue(24, cols);
  for (int e = 0; e < mesh_.n_elements(); ++e) {
    const auto& d = mesh_.element_dofs(e);
    for (int i = 0; i < 24; ++i) {
      if (d[i] >= 0)
        ue.row(i) = u.row(d[i]);
      else
        ue.row(i).setZero();
    }
    avg.middleRows(6 * part_of_[e], 6).noalias() += mesh_.Bbar() * ue;
  }
  for (int a = 0; a < n_parts_; ++a) avg.middleRows(6 * a, 6) /= count_[a];
  return avg;
}

Eigen::MatrixXd InfluenceProblem::displacements(const Eigen::MatrixXd& eta) const {
  return solver_->solve(rhs_for(eta));
}

Eigen::MatrixXd InfluenceProblem::solve_eigenstrain(const Eigen::MatrixXd& eta) const {
  Eigen::MatrixXd out(6 * n_parts_, eta.cols());
  for (Eigen::Index c0 = 0; c0 < eta.cols(); c0 += kChunk) {
    const Eigen::Index nc = std::min<Eigen::Index>(kChunk, eta.cols() - c0);
    out.middleCols(c0, nc) = part_averages(displacements(eta.middleCols(c0, nc)));
  }
  return out;
}

std::vector<Mat6> InfluenceProblem::solve_elastic() const {
  // A uniform macro strain E loads the fluctuation problem like an eigenstrain -E.
  const int ne = mesh_.n_elements();
  Eigen::MatrixXd eta = Eigen::MatrixXd::Zero(6 * ne, 6);
  for (int e = 0; e < ne; ++e) eta.middleRows(6 * e, 6) = -Mat6::Identity();
  const Eigen::MatrixXd avg = solve_eigenstrain(eta);
  std::vector<Mat6> out(n_parts_);
  for (int b = 0; b < n_parts_; ++b) out[b] = avg.middleRows(6 * b, 6);
  return out;
}

std::vector<Mat6> InfluenceProblem::solve_inelastic() const {
  const int n = n_parts_;
  const int ne = mesh_.n_elements();
  std::vector<Mat6> P(static_cast<std::size_t>(n) * n);
  // Loads for parts [a0, a0 + na) at once, six columns per part.
  const int parts_per_chunk = std::max(1, kChunk / 6);
  for (int a0 = 0; a0 < n; a0 += parts_per_chunk) {
    const int na = std::min(parts_per_chunk, n - a0);
    Eigen::MatrixXd eta = Eigen::MatrixXd::Zero(6 * ne, 6 * na);
    for (int e = 0; e < ne; ++e) {
      const int a = part_of_[e] - a0;
      if (a >= 0 && a < na) eta.block(6 * e, 6 * a, 6, 6) = Mat6::Identity();
    }
    const Eigen::MatrixXd avg = part_averages(displacements(eta));
    for (int b = 0; b < n; ++b)
      for (int a = 0; a < na; ++a) P[b * n + a0 + a] = avg.block(6 * b, 6 * a, 6, 6);
  }
  return P;
}

std::vector<Vec6> InfluenceProblem::solve_thermal(const std::vector<Vec6>& alpha) const {
  if (static_cast<int>(alpha.size()) != n_parts_)
    throw Error(ErrorCode::InvalidInput, "one expansion tensor per part required");
  const int ne = mesh_.n_elements();
  Eigen::MatrixXd eta(6 * ne, 1);
  for (int e = 0; e < ne; ++e) eta.middleRows(6 * e, 6) = alpha[part_of_[e]];
  const Eigen::MatrixXd avg = solve_eigenstrain(eta);
  std::vector<Vec6> out(n_parts_);
  for (int b = 0; b < n_parts_; ++b) out[b] = avg.block(6 * b, 0, 6, 1);
  return out;
}

CoefficientSlab CoefficientTensorSet::interpolate(double T) const {
  if (T_base.empty() || !(T >= T_base.front() && T <= T_base.back()))
    throw Error(ErrorCode::OutOfRangeTemperature,
                "temperature " + std::to_string(T) + " K outside the precomputed range");
  std::size_t hi = std::lower_bound(T_base.begin(), T_base.end(), T) - T_base.begin();
  if (T_base[hi] == T) return slabs[hi];
  const std::size_t lo = hi - 1;
  const double w = (T - T_base[lo]) / (T_base[hi] - T_base[lo]);
  const CoefficientSlab& a = slabs[lo];
  const CoefficientSlab& b = slabs[hi];
  auto mix = [w](const auto& x, const auto& y) {
    std::remove_cvref_t<decltype(x)> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (1.0 - w) * x[i] + w * y[i];
    return out;
  };
  return {mix(a.A, b.A), mix(a.P, b.P), mix(a.M, b.M), mix(a.Ath, b.Ath)};
}

CoefficientTensorSet assemble_set(const Microstructure& micro, const MaterialDB& db,
                                  const std::vector<double>& T_base) {
  if (T_base.empty()) throw Error(ErrorCode::InvalidInput, "no base temperatures");
  if (!std::is_sorted(T_base.begin(), T_base.end()) ||
      std::adjacent_find(T_base.begin(), T_base.end()) != T_base.end())
    throw Error(ErrorCode::InvalidInput, "base temperatures must be strictly ascending");
  const int n = micro.rve.n_grains();
  if (static_cast<int>(micro.grains.size()) != n)
    throw Error(ErrorCode::InvalidInput, "grain record count does not match the RVE");

  std::vector<CrystalKernel> kernels;
  kernels.reserve(n);
  for (const GrainRecord& g : micro.grains) kernels.emplace_back(db, g);
  std::vector<Vec6> alpha(n);
  for (int a = 0; a < n; ++a) alpha[a] = kernels[a].alpha();

  CoefficientTensorSet set;
  set.n_parts = n;
  set.T_base = T_base;
  set.C = micro.rve.volume_fractions();
  for (double T : T_base) {
    std::vector<Mat6> L(n);
    for (int a = 0; a < n; ++a) L[a] = kernels[a].stiffness(T);
    CoefficientSlab slab;
    slab.M.resize(n);
    for (int a = 0; a < n; ++a) slab.M[a] = L[a].inverse();
    InfluenceProblem prob(micro.rve, std::move(L));
    slab.A = prob.solve_elastic();
    for (Mat6& a : slab.A) a += Mat6::Identity();
    slab.P = prob.solve_inelastic();
    slab.Ath = prob.solve_thermal(alpha);
    set.slabs.push_back(std::move(slab));
  }
  return set;
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "cache I/O assumes a little-endian host");

constexpr char kMagic[4] = {'E', 'H', 'M', 'C'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& p) : out_(p, std::ios::binary) {
    if (!out_) throw Error(ErrorCode::Io, "cannot write " + p.string());
  }
  void raw(const void* d, std::size_t n) { out_.write(static_cast<const char*>(d), n); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    raw(&bits, 8);
  }
  template <class M>
  void mat(const M& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) f64(m(i, j));
  }
  void finish(const std::filesystem::path& p) {
    out_.flush();
    if (!out_) throw Error(ErrorCode::Io, "write failed for " + p.string());
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& p) : in_(p, std::ios::binary), path_(p) {
    if (!in_) throw Error(ErrorCode::Io, "cannot open " + p.string());
  }
  void raw(void* d, std::size_t n) {
    in_.read(static_cast<char*>(d), n);
    if (!in_) throw Error(ErrorCode::Io, "truncated cache file " + path_.string());
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  double f64() {
    std::uint64_t bits;
    raw(&bits, 8);
    return std::bit_cast<double>(bits);
  }
  template <class M>
  void mat(M& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = f64();
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace

void write_cache(const std::filesystem::path& path, const CoefficientTensorSet& set) {
  Writer w(path);
  w.raw(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(set.n_parts));
  w.u32(static_cast<std::uint32_t>(set.T_base.size()));
  for (double t : set.T_base) w.f64(t);
  for (const CoefficientSlab& s : set.slabs) {
    for (const Mat6& m : s.A) w.mat(m);
    for (const Mat6& m : s.P) w.mat(m);
    for (const Mat6& m : s.M) w.mat(m);
    for (const Vec6& v : s.Ath) w.mat(v);
  }
  for (double c : set.C) w.f64(c);
  w.finish(path);
}

CoefficientTensorSet read_cache(const std::filesystem::path& path) {
  Reader r(path);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw Error(ErrorCode::Io, path.string() + " is not a coefficient cache");
  if (const auto v = r.u32(); v != kVersion)
    throw Error(ErrorCode::Io, "unsupported cache version " + std::to_string(v));
  CoefficientTensorSet set;
  set.n_parts = static_cast<int>(r.u32());
  const std::uint32_t nt = r.u32();
  const std::size_t n = set.n_parts;
  if (n == 0 || nt == 0 || n > 100000 || nt > 10000)
    throw Error(ErrorCode::Io, "implausible cache header in " + path.string());
  set.T_base.resize(nt);
  for (double& t : set.T_base) t = r.f64();
  set.slabs.resize(nt);
  for (CoefficientSlab& s : set.slabs) {
    s.A.resize(n);
    s.P.resize(n * n);
    s.M.resize(n);
    s.Ath.resize(n);
    for (Mat6& m : s.A) r.mat(m);
    for (Mat6& m : s.P) r.mat(m);
    for (Mat6& m : s.M) r.mat(m);
    for (Vec6& v : s.Ath) r.mat(v);
  }
  set.C.resize(n);
  for (double& c : set.C) c = r.f64();
  if (!r.at_end()) throw Error(ErrorCode::Io, "trailing bytes in " + path.string());
  return set;
}

}  // namespace ehm
