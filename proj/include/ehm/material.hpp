#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ehm/microstructure.hpp"
#include "ehm/voigt.hpp"

namespace ehm {

inline constexpr double kHcpCOverA = 1.587;

// C(T) = C_ref + dC_dT * (T - T_ref), crystal frame, MPa.
struct ElasticLaw {
  Mat6 C_ref = Mat6::Zero();
  Mat6 dC_dT = Mat6::Zero();
  double T_ref = 298.0;
  double T_min = 0.0;
  double T_max = 1.0e9;
};

Mat6 stiffness_at(const ElasticLaw& law, double T);

// Voigt-average shear modulus of a stiffness; used as mu in the hardening terms.
double shear_modulus(const Mat6& c);

enum class SlipFamily { Basal, Prismatic, PyramidalA, PyramidalCA, Bcc110, Bcc112, Bcc123 };
inline constexpr int kFamilyCount = 7;

const char* to_string(SlipFamily f) noexcept;

struct SlipSystem {
  SlipFamily family;
  Vec3 n;  // slip direction
  Vec3 m;  // plane normal
  Mat3 Z;  // n m^T
};

// HCP: 3 basal, 3 prismatic, 6 pyramidal <a>, 12 pyramidal <c+a> (c/a = 1.587).
// BCC: 12 {110}, 12 {112}, 24 {123}, all <111> directions.
std::vector<SlipSystem> build_slip_systems(Phase phase);

// tau = sigma_ij Z_ij.
double resolved_shear(const Mat3& Z, const Mat3& sigma);

// One column of the slip-family parameter table. b is stored in metres.
struct SlipFamilyParams {
  double dF = 0.0;        // J
  double dV = 0.0;        // m^3
  double rho_m = 5.0e12;  // m^-2
  double nu_id = 1.0e12;  // Hz
  double b = 0.0;         // m
  double s0_ini = 0.0;    // MPa, amplitude s-hat of the s0(T) law
  double s_298K = 0.0;    // MPa
  double k1 = 0.0;        // m^-1
  double D = 0.0;         // MPa
  double T_ref_s = 298.0; // K
  double T_hat = 300.0;   // K
  double q = 4.0;
  double p = 0.8;
  double m_hat = 0.4;
  double chi = 0.9;
  double k_deb = 0.086;
  double k_B = 1.38e-23;    // J/K
  double rho_for0 = 1.0e12; // m^-2
  double rho_deb0 = 1.0e10; // m^-2
  double g = 0.002;
  double eps_dot_0 = 1.0e7; // 1/s

  void validate(std::string_view family) const;
};

struct PhaseProperties {
  ElasticLaw elastic;
  Mat3 alpha = Mat3::Zero();  // thermal expansion, crystal frame, 1/K
  std::vector<SlipSystem> systems;
};

class MaterialDB {
 public:
  PhaseProperties hcp;
  PhaseProperties bcc;
  std::array<SlipFamilyParams, kFamilyCount> families{};
  double T_stress_free = 298.0;

  const PhaseProperties& phase(Phase p) const { return p == Phase::HcpAlpha ? hcp : bcc; }
  const SlipFamilyParams& params(SlipFamily f) const {
    return families[static_cast<int>(f)];
  }

  // Named access for calibration, e.g. "k1.basal" or "D.bcc" (bcc sets all
  // three BCC families).
  double get(const std::string& name) const;
  void set(const std::string& name, double value);
};

MaterialDB load_material(const std::filesystem::path& path);
MaterialDB parse_material(const std::string& yaml_text);
// The shipped Ti-6242S parameter file.
MaterialDB default_material();
const std::string& default_material_text();

}  // namespace ehm
