#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>

#include "muasv/baselines.hpp"
#include "muasv/io.hpp"
#include "muasv/metrics.hpp"
#include "muasv/mua_sv.hpp"
#include "muasv/superpixel.hpp"
#include "muasv/synthgen.hpp"
#include "muasv/threading.hpp"
#include "muasv/types.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

void apply_thread_cap(int threads) {
  if (threads > 0) {
    muasv::set_max_threads(threads);
    return;
  }
  if (const char* env = std::getenv("MUASV_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) muasv::set_max_threads(n);
  }
}

muasv::MuaSvParams load_params(const std::optional<std::string>& path) {
  muasv::MuaSvParams params;
  if (!path) return params;
  std::ifstream in(*path);
  if (!in) throw muasv::io_error("cannot open params file " + *path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw muasv::validation_error(std::string("invalid params JSON: ") + e.what());
  }
  for (const auto& [key, value] : j.items()) {
    if (key == "lambda_m") params.lambda_m = value.get<double>();
    else if (key == "lambda_a") params.lambda_a = value.get<double>();
    else if (key == "lambda_psi") params.lambda_psi = value.get<double>();
    else if (key == "rho0") params.rho0 = value.get<double>();
    else if (key == "target_size") params.target_size = value.get<double>();
    else if (key == "compactness") params.compactness = value.get<double>();
    else if (key == "eps_stop") params.eps_stop = value.get<double>();
    else if (key == "max_iters") params.max_iters = value.get<int>();
    else if (key == "seed") params.seed = value.get<std::uint64_t>();
    else throw muasv::validation_error("unknown params key '" + key + "'");
  }
  params.validate();
  return params;
}

muasv::HsiCube abundances_as_cube(const muasv::Matrix& data, muasv::Index rows,
                                  muasv::Index cols) {
  muasv::HsiCube c;
  c.rows = rows;
  c.cols = cols;
  c.data = data;
  return c;
}

struct GenerateArgs {
  std::string protocol;
  double snr_db = 30.0;
  std::uint64_t seed = 0;
  std::string library;
  std::string out;
  int threads = 0;
};

int run_generate(const GenerateArgs& args) {
  apply_thread_cap(args.threads);
  const muasv::EndmemberSet library = muasv::read_endmember_csv(args.library);
  muasv::SyntheticScene scene;
  if (args.protocol == "dc1")
    scene = muasv::generate_dc1(library, args.seed, args.snr_db);
  else if (args.protocol == "dc2")
    scene = muasv::generate_dc2(library, args.seed, args.snr_db);
  else
    throw muasv::validation_error("unknown protocol '" + args.protocol + "'");
  muasv::save_scene(scene, args.out, fs::path(args.library).filename().string());
  std::cout << "wrote " << scene.protocol << " scene (" << scene.cube.rows << "x"
            << scene.cube.cols << "x" << scene.cube.band_count() << ") to "
            << args.out << "\n";
  return kExitOk;
}

struct UnmixArgs {
  std::string algo;
  std::string input;
  std::string endmembers;
  int vca_count = 0;
  std::uint64_t seed = 0;
  std::optional<std::string> params_path;
  std::string out;
  int threads = 0;
};

void write_diagnostics(const std::vector<muasv::IterationStats>& stats,
                       const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw muasv::io_error("cannot write " + path.string());
  for (const auto& s : stats) {
    json line;
    line["iteration"] = s.iteration;
    line["rel_change_endmembers"] = std::isnan(s.rel_change_endmembers)
                                        ? json(nullptr)
                                        : json(s.rel_change_endmembers);
    line["rel_change_abundances"] = s.rel_change_abundances;
    line["rel_change_scaling"] = s.rel_change_scaling;
    line["objective_endmembers"] = s.objective_endmembers;
    line["objective_coarse"] = s.objective_coarse;
    line["objective_detail"] = s.objective_detail;
    line["objective_scaling"] = s.objective_scaling;
    line["global_cost"] = s.global_cost;
    line["a1_ratio"] = s.a1_ratio;
    line["field_detail_ratio"] = s.field_detail_ratio;
    line["negative_scaling_count"] = s.negative_scaling_count;
    line["wall_time_s"] = s.wall_time_s;
    out << line.dump() << '\n';
  }
}

int run_unmix(const UnmixArgs& args) {
  apply_thread_cap(args.threads);
  if (args.algo != "fcls" && args.algo != "scls" && args.algo != "mua-sv")
    throw muasv::validation_error("unknown --algo '" + args.algo + "'");
  if (args.endmembers.empty() && args.vca_count <= 0)
    throw muasv::validation_error("either --endmembers or --vca is required");

  const muasv::HsiCube cube = muasv::read_cube(args.input);
  const muasv::MuaSvParams params = load_params(args.params_path);

  muasv::EndmemberSet m0;
  if (!args.endmembers.empty())
    m0 = muasv::read_endmember_csv(args.endmembers);
  else
    m0 = muasv::extract_vca(cube, args.vca_count, args.seed);

  std::error_code ec;
  fs::create_directories(args.out, ec);
  if (ec) throw muasv::io_error("cannot create directory " + args.out);
  const fs::path out_dir(args.out);

  const auto t0 = std::chrono::steady_clock::now();
  muasv::AbundanceMatrix abundances;
  std::optional<muasv::ScalingField> scaling;
  std::optional<muasv::EndmemberField> field;
  std::vector<muasv::IterationStats> diagnostics;
  muasv::Index superpixels = 0;

  if (args.algo == "fcls") {
    abundances = muasv::unmix_fcls(cube, m0);
  } else if (args.algo == "scls") {
    auto res = muasv::unmix_scls(cube, m0);
    abundances = std::move(res.abundances);
    muasv::ScalingField psi;
    psi.data = res.scales.transpose();
    scaling = std::move(psi);
    muasv::EndmemberField f;
    f.pixels.resize(static_cast<std::size_t>(cube.pixel_count()));
    for (muasv::Index px = 0; px < cube.pixel_count(); ++px)
      f.pixels[static_cast<std::size_t>(px)] = res.scales(px) * m0.data;
    field = std::move(f);
  } else {
    auto res = muasv::run_mua_sv(cube, m0, params);
    abundances = std::move(res.abundances);
    scaling = std::move(res.scaling);
    field = std::move(res.field);
    diagnostics = std::move(res.diagnostics);
    superpixels = res.superpixel_count;
  }
  const double wall_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_cube(abundances_as_cube(abundances.data, cube.rows, cube.cols),
             out_dir / "abundances");
  muasv::write_csv_matrix(m0.data, out_dir / "endmembers.csv");
  if (field) muasv::write_field(*field, cube.rows, cube.cols, out_dir / "field");
  if (scaling) muasv::write_scaling_csv(*scaling, out_dir / "scaling.csv");
  if (args.algo == "mua-sv") {
    write_diagnostics(diagnostics, out_dir / "diagnostics.jsonl");
  } else {
    std::ofstream diag(out_dir / "diagnostics.jsonl");
    json line;
    line["algo"] = args.algo;
    line["wall_time_s"] = wall_s;
    diag << line.dump() << '\n';
  }
  for (muasv::Index k = 0; k < abundances.data.rows(); ++k) {
    const muasv::Vector row = abundances.data.row(k).transpose();
    muasv::write_pgm(row, cube.rows, cube.cols,
                     out_dir / ("abundance_" + std::to_string(k) + ".pgm"));
  }

  json info;
  info["algo"] = args.algo;
  info["wall_time_s"] = wall_s;
  info["endmember_count"] = m0.endmember_count();
  if (args.algo == "mua-sv") {
    info["superpixels"] = superpixels;
    info["iterations"] = static_cast<int>(diagnostics.size());
  }
  std::ofstream info_out(out_dir / "info.json");
  if (!info_out) throw muasv::io_error("cannot write info.json");
  info_out << info.dump(2) << '\n';

  std::cout << args.algo << " finished in " << wall_s << " s\n";
  return kExitOk;
}

struct EvaluateArgs {
  std::string est;
  std::string truth;
  std::string out;
  int threads = 0;
};

std::optional<fs::path> first_existing(const fs::path& dir,
                                       std::initializer_list<const char*> names) {
  for (const char* name : names) {
    fs::path base = dir / name;
    fs::path header = base;
    header += ".json";
    if (fs::exists(header)) return base;
  }
  return std::nullopt;
}

int run_evaluate(const EvaluateArgs& args) {
  apply_thread_cap(args.threads);
  const fs::path est_dir(args.est);
  const fs::path truth_dir(args.truth);
  muasv::MetricsReport report;

  const auto est_ab_path = first_existing(est_dir, {"abundances", "truth_abundances"});
  const auto truth_ab_path = first_existing(truth_dir, {"truth_abundances", "abundances"});
  std::optional<muasv::HsiCube> est_ab;
  if (est_ab_path && truth_ab_path) {
    est_ab = muasv::read_cube(*est_ab_path);
    const muasv::HsiCube truth_ab = muasv::read_cube(*truth_ab_path);
    muasv::AbundanceMatrix est_m;
    est_m.data = est_ab->data;
    muasv::AbundanceMatrix truth_m;
    truth_m.data = truth_ab.data;
    report.mse_a = muasv::mse_abundance(truth_m, est_m);
  }

  const auto est_field_path = first_existing(est_dir, {"field", "truth_field"});
  const auto truth_field_path = first_existing(truth_dir, {"truth_field", "field"});
  std::optional<muasv::EndmemberField> est_field;
  if (est_field_path) est_field = muasv::read_field(*est_field_path).field;
  if (est_field && truth_field_path) {
    const muasv::EndmemberField truth_field = muasv::read_field(*truth_field_path).field;
    report.mse_m = muasv::mse_endmembers(truth_field, *est_field);
    report.sam_m = muasv::sam_endmembers(truth_field, *est_field);
  }

  // Reconstruction error against the observed cube; a static endmember
  // matrix stands in when the estimate has no per-pixel field.
  const auto cube_path = first_existing(truth_dir, {"cube"});
  if (cube_path && est_ab) {
    const muasv::HsiCube cube = muasv::read_cube(*cube_path);
    muasv::AbundanceMatrix ab;
    ab.data = est_ab->data;
    if (est_field) {
      report.mse_y = muasv::mse_reconstruction(cube, *est_field, ab);
    } else if (fs::exists(est_dir / "endmembers.csv")) {
      const muasv::Matrix m0 = muasv::read_csv_matrix(est_dir / "endmembers.csv");
      muasv::EndmemberField constant;
      constant.pixels.assign(static_cast<std::size_t>(cube.pixel_count()), m0);
      report.mse_y = muasv::mse_reconstruction(cube, constant, ab);
    }
  }

  if (fs::exists(est_dir / "info.json")) {
    std::ifstream in(est_dir / "info.json");
    json info;
    in >> info;
    if (info.contains("wall_time_s"))
      report.wall_time_s = info["wall_time_s"].get<double>();
  }

  muasv::write_metrics_json(report, args.out);

  const auto print_row = [](const char* name, const std::optional<double>& v) {
    if (v) std::printf("%-12s %14.6e\n", name, *v);
  };
  print_row("mse_a", report.mse_a);
  print_row("mse_m", report.mse_m);
  print_row("mse_y", report.mse_y);
  print_row("sam_m", report.sam_m);
  print_row("wall_time_s", report.wall_time_s);
  return kExitOk;
}

struct SegmentArgs {
  std::string input;
  double size = 3.0;
  double gamma = 0.001;
  std::uint64_t seed = 0;
  std::string out;
  int threads = 0;
};

int run_segment(const SegmentArgs& args) {
  apply_thread_cap(args.threads);
  const muasv::HsiCube cube = muasv::read_cube(args.input);
  const muasv::SuperpixelMap map =
      muasv::slic_segment(cube, args.size, args.gamma, args.seed);
  muasv::write_labels_csv(map.labels, map.rows, map.cols, args.out);
  std::cout << map.superpixel_count << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyperspectral unmixing toolkit: multiscale spatial "
               "regularization with spectral variability, FCLS/SCLS baselines, "
               "synthetic benchmarks and accuracy metrics"};
  app.require_subcommand(1);

  GenerateArgs gen;
  CLI::App* generate = app.add_subcommand("generate", "Generate a synthetic scene");
  generate->add_option("--protocol", gen.protocol, "dc1 or dc2")->required();
  generate->add_option("--snr", gen.snr_db, "observation SNR in dB (inf = noiseless)");
  generate->add_option("--seed", gen.seed, "random seed");
  generate->add_option("--library", gen.library, "endmember library CSV")->required();
  generate->add_option("--out", gen.out, "output directory")->required();
  generate->add_option("--threads", gen.threads, "worker thread cap");

  UnmixArgs un;
  CLI::App* unmix = app.add_subcommand("unmix", "Unmix a cube");
  unmix->add_option("--algo", un.algo, "fcls, scls or mua-sv")->required();
  unmix->add_option("--input", un.input, "input cube (base path or .json)")->required();
  unmix->add_option("--endmembers", un.endmembers, "reference endmember CSV");
  unmix->add_option("--vca", un.vca_count, "extract this many endmembers with VCA");
  unmix->add_option("--seed", un.seed, "seed for VCA extraction");
  std::string params_path;
  CLI::Option* params_opt = unmix->add_option("--params", params_path, "parameter JSON file");
  unmix->add_option("--out", un.out, "output directory")->required();
  unmix->add_option("--threads", un.threads, "worker thread cap");

  EvaluateArgs ev;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Compare an estimate against truth");
  evaluate->add_option("--est", ev.est, "estimate directory")->required();
  evaluate->add_option("--truth", ev.truth, "truth directory")->required();
  evaluate->add_option("--out", ev.out, "output metrics JSON")->required();
  evaluate->add_option("--threads", ev.threads, "worker thread cap");

  SegmentArgs seg;
  CLI::App* segment = app.add_subcommand("segment", "Superpixel segmentation");
  segment->add_option("--input", seg.input, "input cube")->required();
  segment->add_option("--size", seg.size, "target superpixel size sqrt(N/S)");
  segment->add_option("--gamma", seg.gamma, "compactness weight");
  segment->add_option("--seed", seg.seed, "random seed");
  segment->add_option("--out", seg.out, "output labels CSV")->required();
  segment->add_option("--threads", seg.threads, "worker thread cap");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*generate) return run_generate(gen);
    if (*unmix) {
      if (*params_opt) un.params_path = params_path;
      return run_unmix(un);
    }
    if (*evaluate) return run_evaluate(ev);
    if (*segment) return run_segment(seg);
  } catch (const muasv::io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const muasv::validation_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const muasv::numeric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitUsage;
}
