#pragma once

#include <vector>

#include "ehm/ehm_core.hpp"
#include "ehm/microstructure.hpp"

namespace ehm {

// Per grain: the largest per-system sessile density, forest (all three
// buckets) plus the part's debris.
std::vector<double> grain_rho_tot(const PointState& state);

struct PairMax {
  double value = 0.0;
  int i = -1;
  int j = -1;  // i < j
};

// Largest |rho_i - rho_j| over adjacent grains; ties go to the smallest (i, j).
PairMax delta_rho_max(const std::vector<double>& rho_tot, const AdjacencyGraph& graph);

// Equivalent plastic strain of the volume-averaged inelastic strain.
double eqp(const PointState& state, const std::vector<double>& C);

struct FipReport {
  std::vector<double> rho_tot;
  PairMax delta;
  double eps_eqp = 0.0;
};

FipReport fip_report(const PointState& state, const std::vector<double>& C,
                     const AdjacencyGraph& graph);

}  // namespace ehm
