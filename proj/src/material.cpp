#include "ehm/material.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ehm/error.hpp"

namespace ehm {

Mat6 stiffness_at(const ElasticLaw& law, double T) {
  if (!(T >= law.T_min && T <= law.T_max))
    throw Error(ErrorCode::OutOfRangeTemperature,
                "temperature " + std::to_string(T) + " K outside elastic range [" +
                    std::to_string(law.T_min) + ", " + std::to_string(law.T_max) + "]");
  Mat6 c = law.C_ref + law.dC_dT * (T - law.T_ref);
  return 0.5 * (c + c.transpose());
}

double shear_modulus(const Mat6& c) {
  const double a = c(0, 0) + c(1, 1) + c(2, 2);
  const double b = c(0, 1) + c(0, 2) + c(1, 2);
  const double s = c(3, 3) + c(4, 4) + c(5, 5);
  return (a - b + 3.0 * s) / 15.0;
}

const char* to_string(SlipFamily f) noexcept {
  switch (f) {
    case SlipFamily::Basal: return "basal";
    case SlipFamily::Prismatic: return "prismatic";
    case SlipFamily::PyramidalA: return "pyramidal_a";
    case SlipFamily::PyramidalCA: return "pyramidal_ca";
    case SlipFamily::Bcc110: return "bcc110";
    case SlipFamily::Bcc112: return "bcc112";
    case SlipFamily::Bcc123: return "bcc123";
  }
  return "?";
}

double resolved_shear(const Mat3& Z, const Mat3& sigma) { return (sigma.cwiseProduct(Z)).sum(); }

namespace {

using Idx4 = std::array<int, 4>;

Vec3 hcp_direction(const Idx4& d) {
  const double s3 = std::sqrt(3.0);
  const Vec3 a1(1.0, 0.0, 0.0), a2(-0.5, 0.5 * s3, 0.0), a3(-0.5, -0.5 * s3, 0.0);
  const Vec3 c(0.0, 0.0, kHcpCOverA);
  return d[0] * a1 + d[1] * a2 + d[2] * a3 + d[3] * c;
}

Vec3 hcp_normal(const Idx4& p) {
  const double s3 = std::sqrt(3.0);
  const Vec3 a1(1.0, 0.0, 0.0), a2(-0.5, 0.5 * s3, 0.0), c(0.0, 0.0, kHcpCOverA);
  const double vol = a1.dot(a2.cross(c));
  const Vec3 r1 = a2.cross(c) / vol, r2 = c.cross(a1) / vol, r3 = a1.cross(a2) / vol;
  return p[0] * r1 + p[1] * r2 + p[3] * r3;
}

void add_hcp(std::vector<SlipSystem>& out, SlipFamily fam, const std::vector<Idx4>& planes,
             const std::vector<Idx4>& dirs) {
  for (const auto& p : planes)
    for (const auto& d : dirs) {
      if (p[0] * d[0] + p[1] * d[1] + p[2] * d[2] + p[3] * d[3] != 0) continue;
      const Vec3 n = hcp_direction(d).normalized();
      const Vec3 m = hcp_normal(p).normalized();
      out.push_back({fam, n, m, n * m.transpose()});
    }
}

// All sign/permutation variants of a Miller triple, one per +/- pair.
std::vector<Vec3> cubic_family(std::array<int, 3> base) {
  std::vector<std::array<int, 3>> found;
  std::sort(base.begin(), base.end());
  do {
    for (int s = 0; s < 8; ++s) {
      std::array<int, 3> v{base[0] * ((s & 1) ? -1 : 1), base[1] * ((s & 2) ? -1 : 1),
                           base[2] * ((s & 4) ? -1 : 1)};
      const int lead = v[0] != 0 ? v[0] : (v[1] != 0 ? v[1] : v[2]);
      if (lead < 0) continue;
      if (std::find(found.begin(), found.end(), v) == found.end()) found.push_back(v);
    }
  } while (std::next_permutation(base.begin(), base.end()));
  std::vector<Vec3> out;
  for (const auto& v : found) out.emplace_back(v[0], v[1], v[2]);
  return out;
}

void add_bcc(std::vector<SlipSystem>& out, SlipFamily fam, std::array<int, 3> plane_base) {
  const auto dirs = cubic_family({1, 1, 1});
  for (const auto& p : cubic_family(plane_base))
    for (const auto& d : dirs) {
      if (p.dot(d) != 0.0) continue;
      const Vec3 n = d.normalized(), m = p.normalized();
      out.push_back({fam, n, m, n * m.transpose()});
    }
}

}  // namespace

std::vector<SlipSystem> build_slip_systems(Phase phase) {
  std::vector<SlipSystem> out;
  if (phase == Phase::HcpAlpha) {
    const std::vector<Idx4> a_dirs = {{2, -1, -1, 0}, {-1, 2, -1, 0}, {-1, -1, 2, 0}};
    const std::vector<Idx4> ca_dirs = {{2, -1, -1, 3}, {-1, 2, -1, 3}, {-1, -1, 2, 3},
                                       {-2, 1, 1, 3},  {1, -2, 1, 3},  {1, 1, -2, 3}};
    const std::vector<Idx4> pyramids = {{1, 0, -1, 1}, {0, 1, -1, 1}, {-1, 1, 0, 1},
                                        {-1, 0, 1, 1}, {0, -1, 1, 1}, {1, -1, 0, 1}};
    add_hcp(out, SlipFamily::Basal, {{0, 0, 0, 1}}, a_dirs);
    add_hcp(out, SlipFamily::Prismatic, {{1, 0, -1, 0}, {0, 1, -1, 0}, {-1, 1, 0, 0}}, a_dirs);
    add_hcp(out, SlipFamily::PyramidalA, pyramids, a_dirs);
    add_hcp(out, SlipFamily::PyramidalCA, pyramids, ca_dirs);
  } else {
    add_bcc(out, SlipFamily::Bcc110, {1, 1, 0});
    add_bcc(out, SlipFamily::Bcc112, {1, 1, 2});
    add_bcc(out, SlipFamily::Bcc123, {1, 2, 3});
  }
  return out;
}

void SlipFamilyParams::validate(std::string_view family) const {
  auto fail = [&](const char* what) {
    throw Error(ErrorCode::InvalidInput,
                std::string("slip family ") + std::string(family) + ": " + what);
  };
  for (double v : {dF, dV, rho_m, nu_id, b, s0_ini, s_298K, k1, D, T_ref_s, q, chi, k_deb, k_B,
                   rho_for0, rho_deb0, g, eps_dot_0})
    if (!(v > 0.0) || !std::isfinite(v)) fail("parameters must be finite and positive");
  if (!(T_hat != 0.0) || !std::isfinite(T_hat)) fail("T_hat must be finite and nonzero");
  if (!(p >= 0.0 && p <= 1.0)) fail("p must lie in [0, 1]");
  if (!(m_hat > 0.0 && m_hat <= 1.0)) fail("m_hat must lie in (0, 1]");
}

namespace {

std::vector<SlipFamily> families_for(std::string_view key) {
  if (key == "basal") return {SlipFamily::Basal};
  if (key == "prismatic") return {SlipFamily::Prismatic};
  if (key == "pyramidal_a") return {SlipFamily::PyramidalA};
  if (key == "pyramidal_ca") return {SlipFamily::PyramidalCA};
  if (key == "bcc") return {SlipFamily::Bcc110, SlipFamily::Bcc112, SlipFamily::Bcc123};
  if (key == "bcc110") return {SlipFamily::Bcc110};
  if (key == "bcc112") return {SlipFamily::Bcc112};
  if (key == "bcc123") return {SlipFamily::Bcc123};
  throw Error(ErrorCode::InvalidInput, "unknown slip family '" + std::string(key) + "'");
}

double* field(SlipFamilyParams& p, std::string_view key) {
  if (key == "dF") return &p.dF;
  if (key == "dV") return &p.dV;
  if (key == "rho_m") return &p.rho_m;
  if (key == "nu_id") return &p.nu_id;
  if (key == "b") return &p.b;
  if (key == "s0_ini") return &p.s0_ini;
  if (key == "s_298K") return &p.s_298K;
  if (key == "k1") return &p.k1;
  if (key == "D") return &p.D;
  if (key == "T_ref_s") return &p.T_ref_s;
  if (key == "T_hat") return &p.T_hat;
  if (key == "q") return &p.q;
  if (key == "p") return &p.p;
  if (key == "m_hat") return &p.m_hat;
  if (key == "chi") return &p.chi;
  if (key == "k_deb") return &p.k_deb;
  if (key == "k_B") return &p.k_B;
  if (key == "rho_for0") return &p.rho_for0;
  if (key == "rho_deb0") return &p.rho_deb0;
  if (key == "g") return &p.g;
  if (key == "eps_dot_0") return &p.eps_dot_0;
  return nullptr;
}

// The file stores b in micrometres.
constexpr double kMicron = 1.0e-6;

void assign(SlipFamilyParams& p, const std::string& key, double value) {
  double* f = field(p, key);
  if (!f) throw Error(ErrorCode::InvalidInput, "unknown slip parameter '" + key + "'");
  *f = (key == "b") ? value * kMicron : value;
}

double num(const YAML::Node& node, const char* key) {
  if (!node[key]) throw Error(ErrorCode::InvalidInput, std::string("missing key '") + key + "'");
  return node[key].as<double>();
}

double num_or(const YAML::Node& node, const char* key, double fallback) {
  return node[key] ? node[key].as<double>() : fallback;
}

ElasticLaw hcp_law(const YAML::Node& n) {
  ElasticLaw law;
  auto fill = [](Mat6& c, double c11, double c12, double c13, double c33, double c44) {
    c.setZero();
    c(0, 0) = c(1, 1) = c11;
    c(2, 2) = c33;
    c(0, 1) = c(1, 0) = c12;
    c(0, 2) = c(2, 0) = c(1, 2) = c(2, 1) = c13;
    c(3, 3) = c(4, 4) = c44;
    c(5, 5) = 0.5 * (c11 - c12);
  };
  fill(law.C_ref, num(n, "C11"), num(n, "C12"), num(n, "C13"), num(n, "C33"), num(n, "C44"));
  fill(law.dC_dT, num_or(n, "dC11_dT", 0), num_or(n, "dC12_dT", 0), num_or(n, "dC13_dT", 0),
       num_or(n, "dC33_dT", 0), num_or(n, "dC44_dT", 0));
  law.T_ref = num_or(n, "T_ref", 298.0);
  law.T_min = num_or(n, "T_min", 0.0);
  law.T_max = num_or(n, "T_max", 1.0e9);
  return law;
}

ElasticLaw cubic_law(const YAML::Node& n) {
  ElasticLaw law;
  auto fill = [](Mat6& c, double c11, double c12, double c44) {
    c.setZero();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) c(i, j) = (i == j) ? c11 : c12;
    for (int i = 3; i < 6; ++i) c(i, i) = c44;
  };
  fill(law.C_ref, num(n, "C11"), num(n, "C12"), num(n, "C44"));
  fill(law.dC_dT, num_or(n, "dC11_dT", 0), num_or(n, "dC12_dT", 0), num_or(n, "dC44_dT", 0));
  law.T_ref = num_or(n, "T_ref", 298.0);
  law.T_min = num_or(n, "T_min", 0.0);
  law.T_max = num_or(n, "T_max", 1.0e9);
  return law;
}

void check_law(const ElasticLaw& law, const char* name) {
  for (double T : {law.T_min, law.T_max, law.T_ref}) {
    if (T < law.T_min || T > law.T_max) continue;
    Eigen::LLT<Mat6> llt(stiffness_at(law, T));
    if (llt.info() != Eigen::Success)
      throw Error(ErrorCode::InvalidInput,
                  std::string(name) + " stiffness not positive definite at " + std::to_string(T) +
                      " K");
  }
}

}  // namespace

MaterialDB parse_material(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::InvalidInput, std::string("material file: ") + e.what());
  }
  MaterialDB db;
  try {
    if (root["reference"]) db.T_stress_free = num_or(root["reference"], "T_stress_free", 298.0);
    db.hcp.elastic = hcp_law(root["elastic"]["hcp"]);
    db.bcc.elastic = cubic_law(root["elastic"]["bcc"]);
    check_law(db.hcp.elastic, "hcp");
    check_law(db.bcc.elastic, "bcc");

    const auto th = root["thermal"];
    const double aa = num(th["hcp"], "alpha_a"), ac = num(th["hcp"], "alpha_c");
    db.hcp.alpha = Vec3(aa, aa, ac).asDiagonal();
    db.bcc.alpha = Mat3::Identity() * num(th["bcc"], "alpha");

    SlipFamilyParams base;
    if (const auto d = root["slip_defaults"])
      for (const auto& kv : d) assign(base, kv.first.as<std::string>(), kv.second.as<double>());
    db.families.fill(base);

    const auto slip = root["slip"];
    if (!slip) throw Error(ErrorCode::InvalidInput, "material file has no 'slip' section");
    std::array<bool, kFamilyCount> seen{};
    // Generic "bcc" first so that bcc110/112/123 sections can override it.
    // Two passes rather than a sort: assigning a YAML::Node writes through to
    // the document.
    for (bool generic : {true, false})
      for (const auto& sec : slip) {
        const std::string name = sec.first.as<std::string>();
        if ((name == "bcc") != generic) continue;
        for (SlipFamily f : families_for(name)) {
          seen[static_cast<int>(f)] = true;
          for (const auto& kv : sec.second)
            assign(db.families[static_cast<int>(f)], kv.first.as<std::string>(),
                   kv.second.as<double>());
        }
      }
    for (int f = 0; f < kFamilyCount; ++f) {
      if (!seen[f])
        throw Error(ErrorCode::InvalidInput,
                    std::string("missing slip family ") + to_string(static_cast<SlipFamily>(f)));
      db.families[f].validate(to_string(static_cast<SlipFamily>(f)));
    }
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::InvalidInput, std::string("material file: ") + e.what());
  }
  db.hcp.systems = build_slip_systems(Phase::HcpAlpha);
  db.bcc.systems = build_slip_systems(Phase::BccBeta);
  return db;
}

MaterialDB load_material(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_material(ss.str());
}

MaterialDB default_material() { return parse_material(default_material_text()); }

namespace {

std::pair<std::string, std::string> split_name(const std::string& name) {
  const auto dot = name.find('.');
  if (dot == std::string::npos)
    throw Error(ErrorCode::InvalidInput, "parameter name must be key.family: " + name);
  return {name.substr(0, dot), name.substr(dot + 1)};
}

}  // namespace

double MaterialDB::get(const std::string& name) const {
  const auto [key, fam] = split_name(name);
  auto copy = families[static_cast<int>(families_for(fam).front())];
  const double* f = field(copy, key);
  if (!f) throw Error(ErrorCode::InvalidInput, "unknown slip parameter '" + key + "'");
  return key == "b" ? *f / kMicron : *f;
}

void MaterialDB::set(const std::string& name, double value) {
  const auto [key, fam] = split_name(name);
  for (SlipFamily f : families_for(fam)) assign(families[static_cast<int>(f)], key, value);
}

}  // namespace ehm
