#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ehm/ehm_core.hpp"
#include "ehm/oracle.hpp"

namespace ehm {

// Control of one Voigt component over a segment.
struct ComponentControl {
  enum class Kind { StrainRate, Strain, StressRate, Stress };
  Kind kind = Kind::Stress;
  double value = 0.0;  // rate, or the end-of-segment target
  bool stress() const { return kind == Kind::StressRate || kind == Kind::Stress; }
};

struct Segment {
  double duration = 1.0;  // s
  int increments = 1;
  std::optional<double> temperature_end;  // K; unchanged when absent
  std::array<ComponentControl, 6> control{};  // default: traction-free
};

struct LoadProgram {
  double initial_temperature = 298.0;
  std::optional<double> thermal_reference;  // defaults to initial_temperature
  std::vector<Segment> segments;
  int repeat = 1;
  int output_stride = 1;
  int snapshot_stride = 0;  // 0: final state only

  double reference_temperature() const {
    return thermal_reference.value_or(initial_temperature);
  }
  // Same loading held at a constant temperature.
  LoadProgram isothermal(double T) const;
};

LoadProgram parse_program(const std::string& yaml_text);
LoadProgram load_program(const std::filesystem::path& path);

// Uniaxial tension along x with traction-free lateral faces.
LoadProgram uniaxial_tension(double T, double strain_rate, double max_strain, int increments);

struct HistoryRow {
  double time = 0.0;
  double T = 0.0;
  Vec6 eps_bar = Vec6::Zero();
  Vec6 sigma_bar = Vec6::Zero();
  double eps_eqp = 0.0;
  int newton_iterations = 0;
};

void write_history(const std::filesystem::path& path, const std::vector<HistoryRow>& rows);
std::vector<HistoryRow> read_history(const std::filesystem::path& path);

struct RunResult {
  std::vector<HistoryRow> history;
  PointState final_state;
};

using SnapshotSink = std::function<void(int increment, const PointState&)>;

RunResult run_program(const LoadProgram& program, const EhmModel& model,
                      const SnapshotSink& snapshot = {});

struct OracleRunResult {
  std::vector<HistoryRow> history;
  FullFieldState final_state;
};

OracleRunResult run_program(const LoadProgram& program, const FullFieldModel& model);

// Stress of a history at a given eps_bar_11, linear between rows.
double stress_at_strain(const std::vector<HistoryRow>& h, double strain, int component = 0);

// Snapshot (JSON) of a point state.
std::string snapshot_json(const PointState& state, const std::string& point_id);
PointState parse_snapshot(const std::string& json_text, std::string* point_id = nullptr);

// ---------------------------------------------------------------------------
// Batches of material points.

struct BatchPoint {
  std::string id;
  std::optional<double> temperature;        // isothermal override
  std::vector<double> segment_temperatures; // per-segment end temperatures
  std::filesystem::path program;            // empty: batch default
  std::filesystem::path rve;                // empty: batch default
  std::filesystem::path cache;              // empty: batch default
};

struct BatchSpec {
  std::filesystem::path rve;
  std::filesystem::path cache;
  std::filesystem::path material;  // empty: shipped parameters
  std::filesystem::path program;
  std::vector<BatchPoint> points;
};

BatchSpec load_batch(const std::filesystem::path& path);

struct BatchSummaryRow {
  std::string id;
  bool ok = false;
  double T = 0.0;
  double sigma_vm = 0.0;
  double eps_eqp = 0.0;
  double delta_rho_tot_max = 0.0;
  int grain_i = -1;
  int grain_j = -1;
  std::string error;
};

// Runs every point (resuming completed ones from their DONE markers) and
// writes <out>/<id>/{history.csv,final.json,DONE} plus <out>/summary.csv.
std::vector<BatchSummaryRow> run_batch(const BatchSpec& batch, int jobs,
                                       const std::filesystem::path& out_dir);

double von_mises(const Vec6& sigma);

// ---------------------------------------------------------------------------
// Calibration against stress-strain curves.

struct ExperimentCurve {
  std::string name;
  double temperature = 298.0;
  double strain_rate = 8.33e-5;
  std::vector<double> strain;
  std::vector<double> stress;
};

// CSV with "# temperature: <K>" and "# strain_rate: <1/s>" header comments,
// then strain,stress rows.
ExperimentCurve read_experiment(const std::filesystem::path& path);
void write_experiment(const std::filesystem::path& path, const ExperimentCurve& curve);

struct CalibrationOptions {
  int max_evaluations = 200;
  int increments_per_test = 40;
  double target_residual = 0.0;  // stop early once reached
};

struct CalibrationResult {
  std::map<std::string, double> parameters;
  double residual = 0.0;
  std::vector<double> max_relative_error;  // per test
  int evaluations = 0;
};

// Sum over tests of the RMS stress deviation at the experimental strains.
double curve_residual(const std::vector<HistoryRow>& sim, const ExperimentCurve& exp);

// Simulated curve for one test under the given material.
std::vector<HistoryRow> simulate_test(const Microstructure& micro, const MaterialDB& db,
                                      std::shared_ptr<const CoefficientTensorSet> tensors,
                                      const ExperimentCurve& test, int increments);

CalibrationResult calibrate(const Microstructure& micro, const MaterialDB& db,
                            std::shared_ptr<const CoefficientTensorSet> tensors,
                            const std::vector<ExperimentCurve>& tests,
                            const std::vector<std::string>& free,
                            const std::map<std::string, std::pair<double, double>>& bounds,
                            const CalibrationOptions& options = {});

}  // namespace ehm
