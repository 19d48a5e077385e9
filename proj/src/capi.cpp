#include "ehm/ehm.h"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>

#include "ehm/driver.hpp"
#include "ehm/error.hpp"
#include "ehm/fip.hpp"

namespace fs = std::filesystem;

struct ehm_rve {
  ehm::Microstructure micro;
};
struct ehm_material {
  ehm::MaterialDB db;
};
struct ehm_tensors {
  std::shared_ptr<const ehm::CoefficientTensorSet> set;
};
struct ehm_point {
  std::unique_ptr<ehm::EhmModel> model;
  ehm::PointState state;
};

namespace {

thread_local std::string g_last_error;

ehm_status code_of(ehm::ErrorCode c) {
  return static_cast<ehm_status>(static_cast<int>(c));
}

template <class F>
ehm_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return EHM_OK;
  } catch (const ehm::Error& e) {
    g_last_error = e.what();
    return code_of(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return EHM_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw ehm::Error(ehm::ErrorCode::InvalidInput, std::string(what) + " is null");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

extern "C" {

const char* ehm_last_error_message(void) { return g_last_error.c_str(); }

const char* ehm_status_string(ehm_status s) {
  if (s == EHM_OK) return "ok";
  if (s == EHM_ERR_INTERNAL) return "internal error";
  if (s >= 1 && s <= 9) return ehm::to_string(static_cast<ehm::ErrorCode>(s));
  return "unknown status";
}

ehm_status ehm_rve_generate(int nx, int ny, int nz, int n_grains, uint64_t seed,
                            double beta_fraction, ehm_rve** out) {
  return guarded([&] {
    require(out, "output handle");
    ehm::TextureSpec tex;
    tex.beta_fraction = beta_fraction;
    auto r = std::make_unique<ehm_rve>();
    r->micro = ehm::build_synthetic_rve({nx, ny, nz}, n_grains, seed, tex);
    *out = r.release();
  });
}

ehm_status ehm_rve_read(const char* path, ehm_rve** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "output handle");
    auto r = std::make_unique<ehm_rve>();
    r->micro = ehm::read_rve(path);
    *out = r.release();
  });
}

ehm_status ehm_rve_write(const ehm_rve* rve, const char* path) {
  return guarded([&] {
    require(rve, "rve");
    require(path, "path");
    ehm::write_rve(path, rve->micro);
  });
}

ehm_status ehm_rve_rotate_texture(ehm_rve* rve, int component, double shift) {
  return guarded([&] {
    require(rve, "rve");
    if (component < 0 || component > 2)
      throw ehm::Error(ehm::ErrorCode::InvalidInput, "Euler component must be 0, 1 or 2");
    rve->micro.grains = ehm::rotate_texture(rve->micro.grains, component, shift);
  });
}

int ehm_rve_grain_count(const ehm_rve* rve) { return rve ? rve->micro.rve.n_grains() : 0; }

void ehm_rve_free(ehm_rve* rve) { delete rve; }

ehm_status ehm_material_load(const char* path, ehm_material** out) {
  return guarded([&] {
    require(out, "output handle");
    auto m = std::make_unique<ehm_material>();
    m->db = path ? ehm::load_material(path) : ehm::default_material();
    *out = m.release();
  });
}

ehm_status ehm_material_get(const ehm_material* mat, const char* name, double* value) {
  return guarded([&] {
    require(mat, "material");
    require(name, "name");
    require(value, "value");
    *value = mat->db.get(name);
  });
}

ehm_status ehm_material_set(ehm_material* mat, const char* name, double value) {
  return guarded([&] {
    require(mat, "material");
    require(name, "name");
    mat->db.set(name, value);
  });
}

void ehm_material_free(ehm_material* mat) { delete mat; }

ehm_status ehm_tensors_compute(const ehm_rve* rve, const ehm_material* mat,
                               const double* temperatures, size_t n, ehm_tensors** out) {
  return guarded([&] {
    require(rve, "rve");
    require(mat, "material");
    require(temperatures, "temperatures");
    require(out, "output handle");
    auto t = std::make_unique<ehm_tensors>();
    t->set = std::make_shared<const ehm::CoefficientTensorSet>(ehm::assemble_set(
        rve->micro, mat->db, std::vector<double>(temperatures, temperatures + n)));
    *out = t.release();
  });
}

ehm_status ehm_tensors_read(const char* path, ehm_tensors** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "output handle");
    auto t = std::make_unique<ehm_tensors>();
    t->set = std::make_shared<const ehm::CoefficientTensorSet>(ehm::read_cache(path));
    *out = t.release();
  });
}

ehm_status ehm_tensors_write(const ehm_tensors* t, const char* path) {
  return guarded([&] {
    require(t, "tensors");
    require(path, "path");
    ehm::write_cache(path, *t->set);
  });
}

ehm_status ehm_tensors_consistency(const ehm_tensors* t, double* max_a, double* max_p,
                                   double* max_thermal) {
  return guarded([&] {
    require(t, "tensors");
    const ehm::CoefficientTensorSet& s = *t->set;
    double ea = 0.0, ep = 0.0, et = 0.0;
    const int n = s.n_parts;
    for (const ehm::CoefficientSlab& slab : s.slabs) {
      ehm::Mat6 sa = -ehm::Mat6::Identity();
      ehm::Vec6 st = ehm::Vec6::Zero();
      for (int b = 0; b < n; ++b) {
        sa += s.C[b] * slab.A[b];
        st += s.C[b] * slab.Ath[b];
      }
      for (int a = 0; a < n; ++a) {
        ehm::Mat6 sp = ehm::Mat6::Zero();
        for (int b = 0; b < n; ++b) sp += s.C[b] * slab.p(b, a);
        ep = std::max(ep, sp.cwiseAbs().maxCoeff());
      }
      ea = std::max(ea, sa.cwiseAbs().maxCoeff());
      et = std::max(et, st.cwiseAbs().maxCoeff());
    }
    if (max_a) *max_a = ea;
    if (max_p) *max_p = ep;
    if (max_thermal) *max_thermal = et;
  });
}

void ehm_tensors_free(ehm_tensors* t) { delete t; }

ehm_status ehm_point_create(const ehm_rve* rve, const ehm_material* mat, const ehm_tensors* t,
                            double temperature, double reference_temperature, ehm_point** out) {
  return guarded([&] {
    require(rve, "rve");
    require(mat, "material");
    require(t, "tensors");
    require(out, "output handle");
    auto p = std::make_unique<ehm_point>();
    p->model = std::make_unique<ehm::EhmModel>(rve->micro, mat->db, t->set);
    p->state = p->model->initial_state(temperature, reference_temperature);
    *out = p.release();
  });
}

ehm_status ehm_point_step(ehm_point* p, double dt, double dT, const int stress_mask[6],
                          const double values[6], int* newton_iterations) {
  return guarded([&] {
    require(p, "point");
    require(values, "values");
    ehm::IncrementControl c;
    c.dt = dt;
    c.dT = dT;
    for (int k = 0; k < 6; ++k) {
      c.stress_controlled[k] = stress_mask && stress_mask[k] != 0;
      c.value(k) = values[k];
    }
    ehm::StepInfo info;
    p->state = p->model->advance(p->state, c, &info);
    if (newton_iterations) *newton_iterations = info.newton_iterations;
  });
}

void ehm_point_stress(const ehm_point* p, double out[6]) {
  for (int k = 0; k < 6; ++k) out[k] = p->state.sigma_bar(k);
}

void ehm_point_strain(const ehm_point* p, double out[6]) {
  for (int k = 0; k < 6; ++k) out[k] = p->state.eps_bar(k);
}

double ehm_point_eqp(const ehm_point* p) {
  return ehm::homogenize(p->state, p->model->volume_fractions()).eps_eqp;
}

double ehm_point_temperature(const ehm_point* p) { return p->state.T; }

void ehm_point_free(ehm_point* p) { delete p; }

ehm_status ehm_run_program(const char* program_path, const ehm_rve* rve, const ehm_material* mat,
                           const ehm_tensors* t, const char* out_dir) {
  return guarded([&] {
    require(program_path, "program path");
    require(rve, "rve");
    require(mat, "material");
    require(t, "tensors");
    require(out_dir, "output directory");
    const fs::path dir = out_dir;
    fs::create_directories(dir);
    const ehm::LoadProgram prog = ehm::load_program(program_path);
    const ehm::EhmModel model(rve->micro, mat->db, t->set);
    const auto res = ehm::run_program(prog, model, [&](int inc, const ehm::PointState& s) {
      char name[48];
      std::snprintf(name, sizeof name, "snapshot_%06d.json", inc);
      std::ofstream(dir / name) << ehm::snapshot_json(s, "point");
    });
    ehm::write_history(dir / "history.csv", res.history);
    std::ofstream(dir / "final.json") << ehm::snapshot_json(res.final_state, "point");
  });
}

ehm_status ehm_run_batch(const char* spec_path, int jobs, const char* out_dir, int* n_failed) {
  return guarded([&] {
    require(spec_path, "batch spec");
    require(out_dir, "output directory");
    const auto rows = ehm::run_batch(ehm::load_batch(spec_path), jobs, out_dir);
    if (n_failed)
      *n_failed = static_cast<int>(
          std::count_if(rows.begin(), rows.end(), [](const auto& r) { return !r.ok; }));
  });
}

ehm_status ehm_run_oracle(const char* program_path, const ehm_rve* rve, const ehm_material* mat,
                          const char* out_dir) {
  return guarded([&] {
    require(program_path, "program path");
    require(rve, "rve");
    require(mat, "material");
    require(out_dir, "output directory");
    fs::create_directories(out_dir);
    const ehm::FullFieldModel model(rve->micro, mat->db);
    const auto res = ehm::run_program(ehm::load_program(program_path), model);
    ehm::write_history(fs::path(out_dir) / "history.csv", res.history);
  });
}

ehm_status ehm_fip(const char* snapshot_dir, const ehm_rve* rve, const char* out_csv) {
  return guarded([&] {
    require(snapshot_dir, "snapshot directory");
    require(rve, "rve");
    require(out_csv, "output path");
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(snapshot_dir))
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    const auto graph = ehm::adjacency(rve->micro.rve);
    const auto C = rve->micro.rve.volume_fractions();
    // One row per (point, time); final.json repeats the last snapshot.
    std::map<std::pair<std::string, double>, std::string> rows;
    for (const fs::path& f : files) {
      std::ifstream in(f);
      std::stringstream ss;
      ss << in.rdbuf();
      std::string id;
      const ehm::PointState s = ehm::parse_snapshot(ss.str(), &id);
      if (s.parts.size() != C.size())
        throw ehm::Error(ehm::ErrorCode::InvalidInput,
                         f.string() + " does not match the RVE grain count");
      const ehm::FipReport r = ehm::fip_report(s, C, graph);
      rows.emplace(std::pair{id, s.time},
                   id + ',' + fmt(s.time) + ',' + fmt(r.eps_eqp) + ',' + fmt(r.delta.value) + ',' +
                       std::to_string(r.delta.i) + ',' + std::to_string(r.delta.j) + '\n');
    }
    std::string out = "point,time,eps_eqp,delta_rho_tot_max,grain_i,grain_j\n";
    for (const auto& [key, line] : rows) out += line;
    std::ofstream o(out_csv);
    o << out;
    if (!o) throw ehm::Error(ehm::ErrorCode::Io, std::string("cannot write ") + out_csv);
  });
}

ehm_status ehm_calibrate(const char* experiment_dir, const char* free_params,
                         const char* bounds_path, const ehm_rve* rve, const ehm_material* mat,
                         const ehm_tensors* t, int max_evaluations, const char* out_path,
                         double* residual) {
  return guarded([&] {
    require(experiment_dir, "experiment directory");
    require(rve, "rve");
    require(mat, "material");
    require(t, "tensors");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(experiment_dir))
      if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<ehm::ExperimentCurve> tests;
    for (const auto& f : files) tests.push_back(ehm::read_experiment(f));

    std::vector<std::string> free;
    if (free_params) {
      std::stringstream ss(free_params);
      std::string name;
      while (std::getline(ss, name, ','))
        if (!name.empty()) free.push_back(name);
    }
    std::map<std::string, std::pair<double, double>> bounds;
    if (bounds_path) {
      try {
        const YAML::Node root = YAML::LoadFile(bounds_path);
        for (const auto& kv : root) {
          const auto v = kv.second.as<std::vector<double>>();
          if (v.size() != 2)
            throw ehm::Error(ehm::ErrorCode::InfeasibleBounds, "bounds need [lo, hi]");
          bounds[kv.first.as<std::string>()] = {v[0], v[1]};
        }
      } catch (const YAML::Exception& e) {
        throw ehm::Error(ehm::ErrorCode::InvalidInput, std::string("bounds file: ") + e.what());
      }
    }
    ehm::CalibrationOptions opt;
    if (max_evaluations > 0) opt.max_evaluations = max_evaluations;
    const auto r = ehm::calibrate(rve->micro, mat->db, t->set, tests, free, bounds, opt);
    if (residual) *residual = r.residual;
    if (out_path) {
      std::ofstream o(out_path);
      o << "residual: " << fmt(r.residual) << "\nevaluations: " << r.evaluations
        << "\nparameters:\n";
      for (const auto& [k, v] : r.parameters) o << "  " << k << ": " << fmt(v) << '\n';
      o << "max_relative_error:\n";
      for (std::size_t i = 0; i < tests.size() && i < r.max_relative_error.size(); ++i)
        o << "  " << tests[i].name << ": " << fmt(r.max_relative_error[i]) << '\n';
      if (!o) throw ehm::Error(ehm::ErrorCode::Io, std::string("cannot write ") + out_path);
    }
  });
}

}  // extern "C"
