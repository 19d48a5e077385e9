#include "ehm/fip.hpp"

#include <cmath>

#include "ehm/error.hpp"

namespace ehm {

std::vector<double> grain_rho_tot(const PointState& state) {
  std::vector<double> out(state.parts.size(), 0.0);
  for (std::size_t g = 0; g < state.parts.size(); ++g) {
    const SlipState& s = state.parts[g].slip;
    double best = 0.0;
    for (int k = 0; k < s.n_systems(); ++k) best = std::max(best, s.rho_for(k) + s.rho_deb);
    out[g] = best;
  }
  return out;
}

PairMax delta_rho_max(const std::vector<double>& rho, const AdjacencyGraph& graph) {
  if (rho.size() != graph.neighbors.size())
    throw Error(ErrorCode::InvalidInput, "density list does not match the grain graph");
  PairMax best;
  for (int i = 0; i < static_cast<int>(rho.size()); ++i)
    for (int j : graph.neighbors[i]) {
      if (j <= i) continue;
      const double d = std::abs(rho[i] - rho[j]);
      if (best.i < 0 || d > best.value) best = {d, i, j};
    }
  if (best.i < 0) throw Error(ErrorCode::NoPairs, "no adjacent grain pairs");
  return best;
}

double eqp(const PointState& state, const std::vector<double>& C) {
  return homogenize(state, C).eps_eqp;
}

FipReport fip_report(const PointState& state, const std::vector<double>& C,
                     const AdjacencyGraph& graph) {
  FipReport r;
  r.rho_tot = grain_rho_tot(state);
  r.delta = delta_rho_max(r.rho_tot, graph);
  r.eps_eqp = eqp(state, C);
  return r;
}

}  // namespace ehm
