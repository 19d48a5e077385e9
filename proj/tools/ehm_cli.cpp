// Command-line front end; everything goes through the C interface.
#include <CLI11.hpp>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "ehm/ehm.h"

namespace {

int report(ehm_status s) {
  if (s != EHM_OK)
    std::fprintf(stderr, "error (%s): %s\n", ehm_status_string(s), ehm_last_error_message());
  return static_cast<int>(s);
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) v.push_back(std::stod(item));
  return v;
}

struct Handles {
  ehm_rve* rve = nullptr;
  ehm_material* mat = nullptr;
  ehm_tensors* tensors = nullptr;
  ~Handles() {
    ehm_tensors_free(tensors);
    ehm_material_free(mat);
    ehm_rve_free(rve);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Eigenstrain-based reduced-order crystal plasticity"};
  app.require_subcommand(1);

  std::string rve_path, mat_path, out, program, cache;

  auto* gen = app.add_subcommand("generate", "Generate a synthetic periodic Voronoi RVE");
  std::vector<int> dims{16, 16, 16};
  int grains = 145;
  std::uint64_t seed = 1;
  double beta = 0.0;
  int rot_component = -1;
  double rot_shift = 0.0;
  gen->add_option("--dims", dims, "Voxels per axis")->expected(3);
  gen->add_option("--grains", grains, "Number of grains");
  gen->add_option("--seed", seed, "Random seed");
  gen->add_option("--beta-fraction", beta, "Probability that a grain is BCC");
  gen->add_option("--rotate-component", rot_component, "Euler angle to shift (0, 1, 2)");
  gen->add_option("--rotate-shift", rot_shift, "Shift in radians");
  gen->add_option("--out", out, "Output RVE file")->required();

  auto* pre = app.add_subcommand("precompute", "Compute the coefficient-tensor cache");
  std::string temps = "295,373,473,589,700,811,873,923";
  pre->add_option("--rve", rve_path)->required();
  pre->add_option("--mat", mat_path, "Material file (default: shipped Ti-6242S)");
  pre->add_option("--temps", temps, "Base temperatures, comma separated");
  pre->add_option("--out", out, "Output cache")->required();

  auto* run = app.add_subcommand("run", "Run a load program at one material point");
  run->add_option("--program", program)->required();
  run->add_option("--rve", rve_path)->required();
  run->add_option("--mat", mat_path);
  run->add_option("--cache", cache)->required();
  run->add_option("--out", out, "Output directory")->required();

  auto* batch = app.add_subcommand("batch", "Run a batch of material points");
  std::string spec;
  int jobs = 1;
  batch->add_option("--spec", spec)->required();
  batch->add_option("--jobs", jobs);
  batch->add_option("--out", out)->required();

  auto* cal = app.add_subcommand("calibrate", "Fit slip parameters to stress-strain curves");
  std::string exp_dir, free_params, bounds;
  int max_evals = 200;
  cal->add_option("--exp", exp_dir, "Directory of experiment CSVs")->required();
  cal->add_option("--free", free_params, "Comma-separated parameter names");
  cal->add_option("--bounds", bounds, "YAML map name -> [lo, hi]");
  cal->add_option("--rve", rve_path)->required();
  cal->add_option("--mat", mat_path);
  cal->add_option("--cache", cache)->required();
  cal->add_option("--max-evals", max_evals);
  cal->add_option("--out", out, "Result file (YAML)");

  auto* fip = app.add_subcommand("fip", "Fatigue indicators from snapshots");
  std::string snaps;
  fip->add_option("--snapshots", snaps)->required();
  fip->add_option("--rve", rve_path)->required();
  fip->add_option("--out", out)->required();

  auto* orc = app.add_subcommand("oracle", "Full-field crystal-plasticity reference run");
  orc->add_option("--rve", rve_path)->required();
  orc->add_option("--program", program)->required();
  orc->add_option("--mat", mat_path);
  orc->add_option("--out", out)->required();

  CLI11_PARSE(app, argc, argv);

  Handles h;
  auto need_rve = [&] { return report(ehm_rve_read(rve_path.c_str(), &h.rve)); };
  auto need_mat = [&] {
    return report(ehm_material_load(mat_path.empty() ? nullptr : mat_path.c_str(), &h.mat));
  };
  auto need_cache = [&] { return report(ehm_tensors_read(cache.c_str(), &h.tensors)); };

  if (*gen) {
    if (int rc = report(ehm_rve_generate(dims[0], dims[1], dims[2], grains, seed, beta, &h.rve)))
      return rc;
    if (rot_component >= 0)
      if (int rc = report(ehm_rve_rotate_texture(h.rve, rot_component, rot_shift))) return rc;
    return report(ehm_rve_write(h.rve, out.c_str()));
  }
  if (*pre) {
    if (int rc = need_rve()) return rc;
    if (int rc = need_mat()) return rc;
    const std::vector<double> t = parse_list(temps);
    if (int rc = report(ehm_tensors_compute(h.rve, h.mat, t.data(), t.size(), &h.tensors)))
      return rc;
    double ea = 0, ep = 0, et = 0;
    ehm_tensors_consistency(h.tensors, &ea, &ep, &et);
    std::printf("consistency: A %.3e  P %.3e  thermal %.3e\n", ea, ep, et);
    return report(ehm_tensors_write(h.tensors, out.c_str()));
  }
  if (*run) {
    if (int rc = need_rve()) return rc;
    if (int rc = need_mat()) return rc;
    if (int rc = need_cache()) return rc;
    return report(ehm_run_program(program.c_str(), h.rve, h.mat, h.tensors, out.c_str()));
  }
  if (*batch) {
    int failed = 0;
    if (int rc = report(ehm_run_batch(spec.c_str(), jobs, out.c_str(), &failed))) return rc;
    if (failed) std::fprintf(stderr, "%d point(s) failed; see summary.csv\n", failed);
    return failed ? 1 : 0;
  }
  if (*cal) {
    if (int rc = need_rve()) return rc;
    if (int rc = need_mat()) return rc;
    if (int rc = need_cache()) return rc;
    double residual = 0.0;
    if (int rc = report(ehm_calibrate(exp_dir.c_str(), free_params.c_str(),
                                      bounds.empty() ? nullptr : bounds.c_str(), h.rve, h.mat,
                                      h.tensors, max_evals, out.empty() ? nullptr : out.c_str(),
                                      &residual)))
      return rc;
    std::printf("residual: %.9g MPa\n", residual);
    return 0;
  }
  if (*fip) {
    if (int rc = need_rve()) return rc;
    return report(ehm_fip(snaps.c_str(), h.rve, out.c_str()));
  }
  if (*orc) {
    if (int rc = need_rve()) return rc;
    if (int rc = need_mat()) return rc;
    return report(ehm_run_oracle(program.c_str(), h.rve, h.mat, out.c_str()));
  }
  return 0;
}
