#include "ehm/driver.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "ehm/error.hpp"
#include "ehm/fip.hpp"

namespace ehm {

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::Io, "cannot write " + p.string());
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int component_index(const std::string& key) {
  static const char* names[6][2] = {{"xx", "11"}, {"yy", "22"}, {"zz", "33"},
                                    {"yz", "23"}, {"xz", "13"}, {"xy", "12"}};
  for (int k = 0; k < 6; ++k)
    if (key == names[k][0] || key == names[k][1]) return k;
  throw Error(ErrorCode::InvalidInput, "unknown component '" + key + "'");
}

ComponentControl parse_component(const YAML::Node& n) {
  if (!n.IsMap() || n.size() != 1)
    throw Error(ErrorCode::InvalidInput, "component control needs exactly one key");
  const auto it = n.begin();
  const std::string k = it->first.as<std::string>();
  const double v = it->second.as<double>();
  using K = ComponentControl::Kind;
  if (k == "strain_rate") return {K::StrainRate, v};
  if (k == "strain") return {K::Strain, v};
  if (k == "stress_rate") return {K::StressRate, v};
  if (k == "stress") return {K::Stress, v};
  throw Error(ErrorCode::InvalidInput, "unknown component control '" + k + "'");
}

// Runs the program through `step`, shared by the reduced model and the oracle.
template <class State, class Step, class Eqp, class Snap>
std::vector<HistoryRow> drive(const LoadProgram& prog, State& st, Step&& step, Eqp&& eqp,
                              Snap&& snap) {
  if (prog.segments.empty()) throw Error(ErrorCode::InvalidInput, "load program has no segments");
  std::vector<HistoryRow> rows;
  auto record = [&](int iters) {
    rows.push_back({st.time, st.T, st.eps_bar, st.sigma_bar, eqp(st), iters});
  };
  record(0);
  const int stride = std::max(1, prog.output_stride);
  int inc = 0;
  bool last_recorded = true;
  for (int r = 0; r < std::max(1, prog.repeat); ++r) {
    for (const Segment& seg : prog.segments) {
      if (!(seg.duration > 0.0) || seg.increments < 1)
        throw Error(ErrorCode::InvalidInput, "segment duration and increments must be positive");
      const double T0 = st.T;
      const double T1 = seg.temperature_end.value_or(T0);
      const Vec6 s0 = st.sigma_bar;
      const Vec6 e0 = st.eps_bar;
      const double dt = seg.duration / seg.increments;
      for (int i = 0; i < seg.increments; ++i) {
        const double f = static_cast<double>(i + 1) / seg.increments;
        IncrementControl c;
        c.dt = dt;
        c.dT = (i + 1 == seg.increments ? T1 : T0 + f * (T1 - T0)) - st.T;
        for (int k = 0; k < 6; ++k) {
          const ComponentControl& cc = seg.control[k];
          c.stress_controlled[k] = cc.stress();
          switch (cc.kind) {
            case ComponentControl::Kind::StrainRate: c.value(k) = cc.value * dt; break;
            case ComponentControl::Kind::Strain:
              c.value(k) = e0(k) + f * (cc.value - e0(k)) - st.eps_bar(k);
              break;
            case ComponentControl::Kind::StressRate:
              c.value(k) = s0(k) + cc.value * dt * (i + 1);
              break;
            case ComponentControl::Kind::Stress: c.value(k) = s0(k) + f * (cc.value - s0(k)); break;
          }
        }
        StepInfo info;
        try {
          st = step(st, c, info);
        } catch (const Error& e) {
          throw Error(e.code(), "increment " + std::to_string(inc + 1) + ": " + e.what());
        }
        ++inc;
        last_recorded = inc % stride == 0;
        if (last_recorded) record(info.newton_iterations);
        snap(inc, st);
      }
    }
  }
  if (!last_recorded) record(0);
  return rows;
}

}  // namespace

LoadProgram LoadProgram::isothermal(double T) const {
  LoadProgram p = *this;
  p.initial_temperature = T;
  for (Segment& s : p.segments) s.temperature_end.reset();
  return p;
}

LoadProgram parse_program(const std::string& text) {
  try {
    const YAML::Node root = YAML::Load(text);
    LoadProgram p;
    if (root["initial_temperature"]) p.initial_temperature = root["initial_temperature"].as<double>();
    if (root["thermal_reference"]) p.thermal_reference = root["thermal_reference"].as<double>();
    if (root["repeat"]) p.repeat = root["repeat"].as<int>();
    if (root["output_stride"]) p.output_stride = root["output_stride"].as<int>();
    if (root["snapshot_stride"]) p.snapshot_stride = root["snapshot_stride"].as<int>();
    if (!root["segments"] || !root["segments"].IsSequence())
      throw Error(ErrorCode::InvalidInput, "load program needs a segments list");
    for (const auto& s : root["segments"]) {
      Segment seg;
      seg.duration = s["duration"].as<double>();
      seg.increments = s["increments"].as<int>();
      if (s["temperature_end"]) seg.temperature_end = s["temperature_end"].as<double>();
      if (s["control"])
        for (const auto& kv : s["control"])
          seg.control[component_index(kv.first.as<std::string>())] = parse_component(kv.second);
      if (!(seg.duration > 0.0) || seg.increments < 1)
        throw Error(ErrorCode::InvalidInput, "segment duration and increments must be positive");
      p.segments.push_back(seg);
    }
    if (p.segments.empty()) throw Error(ErrorCode::InvalidInput, "load program has no segments");
    if (p.repeat < 1 || p.output_stride < 1 || p.snapshot_stride < 0)
      throw Error(ErrorCode::InvalidInput, "repeat and output_stride must be positive");
    return p;
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::InvalidInput, std::string("load program: ") + e.what());
  }
}

LoadProgram load_program(const fs::path& path) { return parse_program(slurp(path)); }

LoadProgram uniaxial_tension(double T, double strain_rate, double max_strain, int increments) {
  LoadProgram p;
  p.initial_temperature = T;
  Segment s;
  s.duration = max_strain / strain_rate;
  s.increments = increments;
  s.control[0] = {ComponentControl::Kind::StrainRate, strain_rate};
  p.segments.push_back(s);
  return p;
}

void write_history(const fs::path& path, const std::vector<HistoryRow>& rows) {
  std::ostringstream o;
  o << "time,T,eps_11,eps_22,eps_33,eps_23,eps_13,eps_12,"
       "sigma_11,sigma_22,sigma_33,sigma_23,sigma_13,sigma_12,eps_eqp,newton_iterations\n";
  for (const HistoryRow& r : rows) {
    o << num(r.time) << ',' << num(r.T);
    for (int k = 0; k < 6; ++k) o << ',' << num(r.eps_bar(k));
    for (int k = 0; k < 6; ++k) o << ',' << num(r.sigma_bar(k));
    o << ',' << num(r.eps_eqp) << ',' << r.newton_iterations << '\n';
  }
  spit(path, o.str());
}

std::vector<HistoryRow> read_history(const fs::path& path) {
  std::istringstream in(slurp(path));
  std::string line;
  std::getline(in, line);
  std::vector<HistoryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() != 16) throw Error(ErrorCode::Io, "malformed history row in " + path.string());
    HistoryRow r;
    r.time = v[0];
    r.T = v[1];
    for (int k = 0; k < 6; ++k) {
      r.eps_bar(k) = v[2 + k];
      r.sigma_bar(k) = v[8 + k];
    }
    r.eps_eqp = v[14];
    r.newton_iterations = static_cast<int>(v[15]);
    rows.push_back(r);
  }
  return rows;
}

RunResult run_program(const LoadProgram& program, const EhmModel& model,
                      const SnapshotSink& snapshot) {
  RunResult res;
  PointState st = model.initial_state(program.initial_temperature, program.reference_temperature());
  const auto& C = model.volume_fractions();
  res.history = drive(
      program, st,
      [&](const PointState& s, const IncrementControl& c, StepInfo& info) {
        return model.advance(s, c, &info);
      },
      [&](const PointState& s) { return homogenize(s, C).eps_eqp; },
      [&](int inc, const PointState& s) {
        if (snapshot && program.snapshot_stride > 0 && inc % program.snapshot_stride == 0)
          snapshot(inc, s);
      });
  res.final_state = std::move(st);
  return res;
}

OracleRunResult run_program(const LoadProgram& program, const FullFieldModel& model) {
  OracleRunResult res;
  FullFieldState st =
      model.initial_state(program.initial_temperature, program.reference_temperature());
  res.history = drive(
      program, st,
      [&](const FullFieldState& s, const IncrementControl& c, StepInfo& info) {
        return model.advance(s, c, &info);
      },
      [&](const FullFieldState& s) {
        Vec6 mu = Vec6::Zero();
        for (const GaussState& g : s.gp) mu += g.mu;
        return equivalent_strain(mu / static_cast<double>(s.gp.size()));
      },
      [](int, const FullFieldState&) {});
  res.final_state = std::move(st);
  return res;
}

double stress_at_strain(const std::vector<HistoryRow>& h, double strain, int comp) {
  if (h.empty()) throw Error(ErrorCode::InvalidInput, "empty history");
  if (strain <= h.front().eps_bar(comp)) return h.front().sigma_bar(comp);
  for (std::size_t i = 1; i < h.size(); ++i) {
    const double e0 = h[i - 1].eps_bar(comp);
    const double e1 = h[i].eps_bar(comp);
    if (strain <= e1 && e1 > e0) {
      const double w = (strain - e0) / (e1 - e0);
      return (1.0 - w) * h[i - 1].sigma_bar(comp) + w * h[i].sigma_bar(comp);
    }
  }
  return h.back().sigma_bar(comp);
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json vec_json(const Vec6& v) {
  return nlohmann::json::array({v(0), v(1), v(2), v(3), v(4), v(5)});
}

Vec6 json_vec(const nlohmann::json& j) {
  Vec6 v;
  for (int k = 0; k < 6; ++k) v(k) = j.at(k).get<double>();
  return v;
}

}  // namespace

std::string snapshot_json(const PointState& s, const std::string& id) {
  nlohmann::json j;
  j["point"] = id;
  j["time"] = s.time;
  j["T"] = s.T;
  j["T_ref"] = s.T_ref;
  j["eps_bar"] = vec_json(s.eps_bar);
  j["sigma_bar"] = vec_json(s.sigma_bar);
  j["eps_bar_rate"] = vec_json(s.eps_bar_rate);
  auto& parts = j["parts"] = nlohmann::json::array();
  for (const PartState& p : s.parts) {
    nlohmann::json q;
    q["eps"] = vec_json(p.eps);
    q["mu"] = vec_json(p.mu);
    q["sigma"] = vec_json(p.sigma);
    q["mu_rate"] = vec_json(p.mu_rate);
    q["rho_fwd"] = p.slip.rho_fwd;
    q["rho_rev_plus"] = p.slip.rho_rev_plus;
    q["rho_rev_minus"] = p.slip.rho_rev_minus;
    q["gamma_acc"] = p.slip.gamma_acc;
    q["rho0"] = p.slip.rho0;
    q["last_sign"] = p.slip.last_sign;
    q["rho_deb"] = p.slip.rho_deb;
    parts.push_back(std::move(q));
  }
  return j.dump(1);
}

PointState parse_snapshot(const std::string& text, std::string* id) {
  try {
    const auto j = nlohmann::json::parse(text);
    PointState s;
    if (id) *id = j.value("point", std::string{});
    s.time = j.at("time").get<double>();
    s.T = j.at("T").get<double>();
    s.T_ref = j.at("T_ref").get<double>();
    s.eps_bar = json_vec(j.at("eps_bar"));
    s.sigma_bar = json_vec(j.at("sigma_bar"));
    s.eps_bar_rate = json_vec(j.at("eps_bar_rate"));
    for (const auto& q : j.at("parts")) {
      PartState p;
      p.eps = json_vec(q.at("eps"));
      p.mu = json_vec(q.at("mu"));
      p.sigma = json_vec(q.at("sigma"));
      p.mu_rate = json_vec(q.at("mu_rate"));
      p.slip.rho_fwd = q.at("rho_fwd").get<std::vector<double>>();
      p.slip.rho_rev_plus = q.at("rho_rev_plus").get<std::vector<double>>();
      p.slip.rho_rev_minus = q.at("rho_rev_minus").get<std::vector<double>>();
      p.slip.gamma_acc = q.at("gamma_acc").get<std::vector<double>>();
      p.slip.rho0 = q.at("rho0").get<std::vector<double>>();
      p.slip.last_sign = q.at("last_sign").get<std::vector<std::int8_t>>();
      p.slip.rho_deb = q.at("rho_deb").get<double>();
      s.parts.push_back(std::move(p));
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidInput, std::string("snapshot: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

double von_mises(const Vec6& s) {
  const double a = s(0) - s(1), b = s(1) - s(2), c = s(2) - s(0);
  return std::sqrt(0.5 * (a * a + b * b + c * c) + 3.0 * (s(3) * s(3) + s(4) * s(4) + s(5) * s(5)));
}

BatchSpec load_batch(const fs::path& path) {
  const fs::path dir = path.parent_path();
  auto rel = [&](const YAML::Node& n) -> fs::path {
    if (!n) return {};
    fs::path p = n.as<std::string>();
    return p.is_absolute() ? p : dir / p;
  };
  try {
    const YAML::Node root = YAML::Load(slurp(path));
    BatchSpec b;
    b.rve = rel(root["rve"]);
    b.cache = rel(root["cache"]);
    b.material = rel(root["material"]);
    b.program = rel(root["program"]);
    if (!root["points"] || !root["points"].IsSequence())
      throw Error(ErrorCode::InvalidInput, "batch needs a points list");
    for (const auto& n : root["points"]) {
      BatchPoint p;
      p.id = n["id"].as<std::string>();
      if (n["temperature"]) p.temperature = n["temperature"].as<double>();
      if (n["segment_temperatures"])
        p.segment_temperatures = n["segment_temperatures"].as<std::vector<double>>();
      p.program = rel(n["program"]);
      p.rve = rel(n["rve"]);
      p.cache = rel(n["cache"]);
      b.points.push_back(std::move(p));
    }
    std::vector<std::string> ids;
    for (const auto& p : b.points) ids.push_back(p.id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
      throw Error(ErrorCode::InvalidInput, "batch point ids must be unique");
    return b;
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::InvalidInput, std::string("batch spec: ") + e.what());
  }
}

namespace {

struct SharedModel {
  Microstructure micro;
  AdjacencyGraph graph;
  std::unique_ptr<EhmModel> model;
};

std::string summary_header() {
  return "id,ok,T,sigma_vm,eps_eqp,delta_rho_tot_max,grain_i,grain_j,error\n";
}

std::string summary_line(const BatchSummaryRow& r) {
  std::string err = r.error;
  std::replace(err.begin(), err.end(), ',', ';');
  std::replace(err.begin(), err.end(), '\n', ' ');
  return r.id + ',' + (r.ok ? "1" : "0") + ',' + num(r.T) + ',' + num(r.sigma_vm) + ',' +
         num(r.eps_eqp) + ',' + num(r.delta_rho_tot_max) + ',' + std::to_string(r.grain_i) + ',' +
         std::to_string(r.grain_j) + ',' + err + '\n';
}

BatchSummaryRow parse_summary_line(const std::string& line) {
  std::vector<std::string> c;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) c.push_back(cell);
  if (c.size() < 8) throw Error(ErrorCode::Io, "malformed summary row");
  BatchSummaryRow r;
  r.id = c[0];
  r.ok = c[1] == "1";
  r.T = std::stod(c[2]);
  r.sigma_vm = std::stod(c[3]);
  r.eps_eqp = std::stod(c[4]);
  r.delta_rho_tot_max = std::stod(c[5]);
  r.grain_i = std::stoi(c[6]);
  r.grain_j = std::stoi(c[7]);
  if (c.size() > 8) r.error = c[8];
  return r;
}

}  // namespace

std::vector<BatchSummaryRow> run_batch(const BatchSpec& batch, int jobs, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const MaterialDB db = batch.material.empty() ? default_material() : load_material(batch.material);

  // Models are built up front, serially, and shared read-only by the workers.
  std::map<std::pair<std::string, std::string>, std::shared_ptr<SharedModel>> models;
  std::map<std::string, LoadProgram> programs;
  std::vector<std::shared_ptr<SharedModel>> point_model(batch.points.size());
  std::vector<const LoadProgram*> point_program(batch.points.size());
  for (std::size_t i = 0; i < batch.points.size(); ++i) {
    const BatchPoint& p = batch.points[i];
    const fs::path rve = p.rve.empty() ? batch.rve : p.rve;
    const fs::path cache = p.cache.empty() ? batch.cache : p.cache;
    const fs::path prog = p.program.empty() ? batch.program : p.program;
    if (rve.empty() || cache.empty() || prog.empty())
      throw Error(ErrorCode::InvalidInput, "point " + p.id + " lacks an rve, cache or program");
    auto& m = models[{rve.string(), cache.string()}];
    if (!m) {
      m = std::make_shared<SharedModel>();
      m->micro = read_rve(rve);
      m->graph = adjacency(m->micro.rve);
      m->model = std::make_unique<EhmModel>(
          m->micro, db, std::make_shared<const CoefficientTensorSet>(read_cache(cache)));
    }
    point_model[i] = m;
    auto it = programs.find(prog.string());
    if (it == programs.end()) it = programs.emplace(prog.string(), load_program(prog)).first;
    point_program[i] = &it->second;
  }

  std::vector<BatchSummaryRow> rows(batch.points.size());
  auto run_point = [&](std::size_t i) {
    const BatchPoint& p = batch.points[i];
    const fs::path dir = out_dir / p.id;
    BatchSummaryRow row;
    row.id = p.id;
    if (fs::exists(dir / "DONE")) {
      std::istringstream in(slurp(dir / "summary_row.csv"));
      std::string line;
      std::getline(in, line);
      rows[i] = parse_summary_line(line);
      return;
    }
    try {
      fs::create_directories(dir);
      LoadProgram prog = *point_program[i];
      if (p.temperature) prog = prog.isothermal(*p.temperature);
      if (!p.segment_temperatures.empty()) {
        if (p.segment_temperatures.size() != prog.segments.size())
          throw Error(ErrorCode::InvalidInput, "segment temperature count mismatch");
        for (std::size_t s = 0; s < prog.segments.size(); ++s)
          prog.segments[s].temperature_end = p.segment_temperatures[s];
      }
      const SharedModel& sm = *point_model[i];
      const RunResult res = run_program(prog, *sm.model, [&](int inc, const PointState& s) {
        char name[48];
        std::snprintf(name, sizeof name, "snapshot_%06d.json", inc);
        spit(dir / name, snapshot_json(s, p.id));
      });
      write_history(dir / "history.csv", res.history);
      spit(dir / "final.json", snapshot_json(res.final_state, p.id));
      const Homogenized h = homogenize(res.final_state, sm.model->volume_fractions());
      row.ok = true;
      row.T = res.final_state.T;
      row.sigma_vm = von_mises(res.final_state.sigma_bar);
      row.eps_eqp = h.eps_eqp;
      if (sm.micro.rve.n_grains() > 1) {
        const PairMax pm = delta_rho_max(grain_rho_tot(res.final_state), sm.graph);
        row.delta_rho_tot_max = pm.value;
        row.grain_i = pm.i;
        row.grain_j = pm.j;
      }
      spit(dir / "summary_row.csv", summary_line(row));
      spit(dir / "DONE", "");
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
      try {
        spit(dir / "error.txt", row.error + "\n");
      } catch (...) {
      }
    }
    rows[i] = row;
  };

  const int n_workers = std::max(1, std::min<int>(jobs, static_cast<int>(batch.points.size())));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < batch.points.size();) run_point(i);
  };
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::string text = summary_header();
  for (const auto& r : rows) text += summary_line(r);
  spit(out_dir / "summary.csv", text);
  return rows;
}

// ---------------------------------------------------------------------------

ExperimentCurve read_experiment(const fs::path& path) {
  ExperimentCurve c;
  c.name = path.stem().string();
  std::istringstream in(slurp(path));
  std::string line;
  bool have_T = false, have_rate = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      std::string key = line.substr(1, colon - 1);
      key.erase(0, key.find_first_not_of(" \t"));
      key.erase(key.find_last_not_of(" \t") + 1);
      const double v = std::stod(line.substr(colon + 1));
      if (key == "temperature") c.temperature = v, have_T = true;
      if (key == "strain_rate") c.strain_rate = v, have_rate = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    try {
      c.strain.push_back(std::stod(line.substr(0, comma)));
      c.stress.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::invalid_argument&) {
      // column header
    }
  }
  if (!have_T || !have_rate)
    throw Error(ErrorCode::InvalidInput,
                path.string() + ": missing '# temperature:' or '# strain_rate:' header");
  if (c.strain.empty()) throw Error(ErrorCode::InvalidInput, path.string() + ": no data rows");
  for (std::size_t i = 1; i < c.strain.size(); ++i)
    if (!(c.strain[i] > c.strain[i - 1]))
      throw Error(ErrorCode::InvalidInput, path.string() + ": strain must increase");
  return c;
}

void write_experiment(const fs::path& path, const ExperimentCurve& c) {
  std::string t = "# temperature: " + num(c.temperature) + "\n# strain_rate: " +
                  num(c.strain_rate) + "\nstrain,stress\n";
  for (std::size_t i = 0; i < c.strain.size(); ++i) t += num(c.strain[i]) + ',' + num(c.stress[i]) + '\n';
  spit(path, t);
}

double curve_residual(const std::vector<HistoryRow>& sim, const ExperimentCurve& exp) {
  double s = 0.0;
  for (std::size_t i = 0; i < exp.strain.size(); ++i) {
    const double d = stress_at_strain(sim, exp.strain[i]) - exp.stress[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(exp.strain.size()));
}

std::vector<HistoryRow> simulate_test(const Microstructure& micro, const MaterialDB& db,
                                      std::shared_ptr<const CoefficientTensorSet> tensors,
                                      const ExperimentCurve& test, int increments) {
  const EhmModel model(micro, db, std::move(tensors));
  const double max_strain = test.strain.back();
  return run_program(uniaxial_tension(test.temperature, test.strain_rate, max_strain, increments),
                     model)
      .history;
}

CalibrationResult calibrate(const Microstructure& micro, const MaterialDB& db0,
                            std::shared_ptr<const CoefficientTensorSet> tensors,
                            const std::vector<ExperimentCurve>& tests,
                            const std::vector<std::string>& free,
                            const std::map<std::string, std::pair<double, double>>& bounds,
                            const CalibrationOptions& opt) {
  if (tests.empty()) throw Error(ErrorCode::InvalidInput, "calibration needs at least one test");
  const int n = static_cast<int>(free.size());
  std::vector<double> lo(n), hi(n), x(n);
  MaterialDB db = db0;
  for (int i = 0; i < n; ++i) {
    const auto it = bounds.find(free[i]);
    if (it == bounds.end()) throw Error(ErrorCode::InfeasibleBounds, "no bounds for " + free[i]);
    lo[i] = it->second.first;
    hi[i] = it->second.second;
    if (!(lo[i] < hi[i]) || !std::isfinite(lo[i]) || !std::isfinite(hi[i]))
      throw Error(ErrorCode::InfeasibleBounds, "empty or non-finite bounds for " + free[i]);
    x[i] = std::clamp(db.get(free[i]), lo[i], hi[i]);
  }

  int evals = 0;
  std::vector<double> last_errors;
  auto objective = [&](const std::vector<double>& v, std::vector<double>* errs) {
    ++evals;
    MaterialDB trial = db0;
    try {
      for (int i = 0; i < n; ++i) trial.set(free[i], v[i]);
      double total = 0.0;
      if (errs) errs->clear();
      for (const ExperimentCurve& t : tests) {
        const auto sim = simulate_test(micro, trial, tensors, t, opt.increments_per_test);
        total += curve_residual(sim, t);
        if (errs) {
          double m = 0.0;
          for (std::size_t k = 0; k < t.strain.size(); ++k) {
            const double ref = std::max(std::abs(t.stress[k]), 1.0e-12);
            m = std::max(m, std::abs(stress_at_strain(sim, t.strain[k]) - t.stress[k]) / ref);
          }
          errs->push_back(m);
        }
      }
      return total;
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  double best = objective(x, nullptr);
  const auto budget_left = [&] { return evals < opt.max_evaluations && best > opt.target_residual; };

  // Golden-section minimization of f over [a, b], seeded with the incumbent
  // (t0, best). Stops once the bracket is below rel_width of its start.
  auto golden = [&](auto&& f, double a, double b, double t0, double rel_width) {
    constexpr double kInvPhi = 0.6180339887498949;
    double tbest = t0, fbest = best;
    auto note = [&](double t, double v) {
      if (v < fbest) fbest = v, tbest = t;
    };
    const double width0 = b - a;
    double c = b - kInvPhi * (b - a), d = a + kInvPhi * (b - a);
    double fc = f(c);
    note(c, fc);
    if (!budget_left() || fbest <= opt.target_residual) return std::tuple{tbest, fbest, b - a};
    double fd = f(d);
    note(d, fd);
    while (b - a > rel_width * width0 && evals < opt.max_evaluations &&
           fbest > opt.target_residual) {
      if (fc < fd) {
        b = d, d = c, fd = fc;
        c = b - kInvPhi * (b - a);
        fc = f(c);
        note(c, fc);
      } else {
        a = c, c = d, fc = fd;
        d = a + kInvPhi * (b - a);
        fd = f(d);
        note(d, fd);
      }
    }
    return std::tuple{tbest, fbest, b - a};
  };

  std::vector<double> radius(n);
  for (int i = 0; i < n; ++i) radius[i] = hi[i] - lo[i];
  constexpr double kLineWidth = 3e-2;

  while (n > 0 && budget_left()) {
    const std::vector<double> cycle_start = x;
    bool progress = false;
    for (int i = 0; i < n && budget_left(); ++i) {
      const double a = std::max(lo[i], x[i] - radius[i]);
      const double b = std::min(hi[i], x[i] + radius[i]);
      std::vector<double> v = x;
      const auto [t, f, width] = golden(
          [&](double s) {
            v[i] = s;
            return objective(v, nullptr);
          },
          a, b, x[i], kLineWidth);
      const double moved = std::abs(t - x[i]);
      if (f < best) {
        progress = true;
        best = f;
        x[i] = t;
      }
      radius[i] = std::clamp(std::max(2.0 * moved, 2.0 * width), 1e-12 * (hi[i] - lo[i]),
                             hi[i] - lo[i]);
    }

    // Pattern move along the net displacement of the cycle, which follows
    // valleys that run across the coordinate axes.
    std::vector<double> dir(n);
    int moved_coords = 0;
    for (int i = 0; i < n; ++i) {
      dir[i] = x[i] - cycle_start[i];
      moved_coords += dir[i] != 0.0;
    }
    if (moved_coords > 1 && budget_left()) {
      double tmax = 8.0;
      for (int i = 0; i < n; ++i) {
        if (dir[i] > 0.0) tmax = std::min(tmax, (hi[i] - x[i]) / dir[i]);
        if (dir[i] < 0.0) tmax = std::min(tmax, (lo[i] - x[i]) / dir[i]);
      }
      if (tmax > 0.0) {
        std::vector<double> v(n);
        const auto [t, f, width] = golden(
            [&](double s) {
              for (int i = 0; i < n; ++i) v[i] = x[i] + s * dir[i];
              return objective(v, nullptr);
            },
            0.0, tmax, 0.0, kLineWidth);
        if (f < best) {
          progress = true;
          best = f;
          for (int i = 0; i < n; ++i) x[i] += t * dir[i];
        }
      }
    }

    if (!progress) {
      bool tiny = true;
      for (int i = 0; i < n; ++i) {
        radius[i] *= 0.1;
        tiny = tiny && radius[i] <= 1e-12 * (hi[i] - lo[i]);
      }
      if (tiny) break;
    }
  }
  CalibrationResult r;
  for (int i = 0; i < n; ++i) r.parameters[free[i]] = x[i];
  const int counted = evals;
  r.residual = objective(x, &r.max_relative_error);
  r.evaluations = counted;
  return r;
}

}  // namespace ehm
