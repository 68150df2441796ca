// kdmd: kernel-based Koopman spectral analysis from snapshot data.
//
// Subcommands: simulate | fit | eval | compare | export-plots.
// Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Dense>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "kdmd/edmd.hpp"
#include "kdmd/fhn.hpp"
#include "kdmd/io.hpp"
#include "kdmd/kernels.hpp"
#include "kdmd/koopman.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string kernel;
  int rank = 0;
  double threshold = 0.0;
  std::string normalize;
  std::uint64_t seed = 0;
  std::string out;
  int top = 0;
  double tol = 0.0;
  std::string format;
  int trajectories = 0;
  int snapshots = 0;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "JSON configuration document");
  cmd->add_option("--kernel", flags.kernel,
                  "kernel spec: polynomial:ALPHA | gaussian:SIGMA | linear");
  cmd->add_option("--rank", flags.rank, "fixed truncation rank");
  cmd->add_option("--threshold", flags.threshold, "relative truncation threshold");
  cmd->add_option("--normalize", flags.normalize, "scale data to unit mean norm: on|off");
  cmd->add_option("--seed", flags.seed, "RNG seed");
  cmd->add_option("--out", flags.out, "output directory");
  cmd->add_option("--top", flags.top, "number of modes to export");
  cmd->add_option("--tol", flags.tol, "matching tolerance");
  cmd->add_option("--format", flags.format, "trajectory file format: binary|csv");
  cmd->add_option("--trajectories", flags.trajectories, "number of trajectories");
  cmd->add_option("--snapshots", flags.snapshots, "snapshots per trajectory");
}

// Config file first, explicit flags override.
kdmd::io::RunConfig resolve_config(const CLI::App& cmd, const CommonFlags& flags) {
  kdmd::io::RunConfig cfg;
  if (!flags.config_path.empty()) cfg = kdmd::io::load_run_config(flags.config_path);
  if (cmd.count("--kernel")) cfg.kernel = flags.kernel;
  if (cmd.count("--rank")) {
    cfg.rank = flags.rank;
    cfg.threshold.reset();
  }
  if (cmd.count("--threshold")) {
    cfg.threshold = flags.threshold;
    cfg.rank.reset();
  }
  if (cmd.count("--normalize")) {
    if (flags.normalize != "on" && flags.normalize != "off")
      throw kdmd::ConfigError("--normalize takes 'on' or 'off'");
    cfg.normalize = flags.normalize == "on";
  }
  if (cmd.count("--seed")) cfg.seed = flags.seed;
  if (cmd.count("--out")) cfg.out = flags.out;
  if (cmd.count("--top")) cfg.top = flags.top;
  if (cmd.count("--tol")) cfg.tol = flags.tol;
  if (cmd.count("--format")) cfg.format = flags.format;
  if (cmd.count("--trajectories")) cfg.trajectories = flags.trajectories;
  if (cmd.count("--snapshots")) cfg.snapshots = flags.snapshots;
  return cfg;
}

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016" PRIx64, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw kdmd::IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw kdmd::IoError("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------

int cmd_simulate(const kdmd::io::RunConfig& cfg) {
  kdmd::fhn::FhnConfig fhn;
  fhn.rng_seed = cfg.seed;
  fhn.n_trajectories = cfg.trajectories;
  fhn.n_snapshots = cfg.snapshots;
  fhn.dt_internal = cfg.dt_internal;
  fhn.forcing_stddev = cfg.forcing_stddev;
  fhn.validate();
  if (cfg.format != "binary" && cfg.format != "csv")
    throw kdmd::ConfigError("format must be 'binary' or 'csv'");

  const fs::path out_dir(cfg.out);
  fs::create_directories(out_dir);

  std::cerr << "simulating " << fhn.n_trajectories << " trajectories of "
            << fhn.n_snapshots << " snapshots (seed " << fhn.rng_seed << ")\n";
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<kdmd::SnapshotSet> sets = kdmd::fhn::generate_dataset(fhn);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const json fhn_json = {{"c0", fhn.c0},
                         {"c1", fhn.c1},
                         {"delta", fhn.delta},
                         {"epsilon", fhn.epsilon},
                         {"domain_length", fhn.domain_length},
                         {"n_modes", fhn.n_modes},
                         {"dt_sample", fhn.dt_sample},
                         {"perturb_period", fhn.perturb_period},
                         {"forcing_centers", fhn.forcing_centers},
                         {"forcing_stddev", fhn.forcing_stddev},
                         {"n_snapshots", fhn.n_snapshots},
                         {"n_trajectories", fhn.n_trajectories},
                         {"rng_seed", fhn.rng_seed},
                         {"dt_internal", fhn.dt_internal}};

  json manifest;
  manifest["command"] = "simulate";
  manifest["created_by"] = "kdmd";
  manifest["seed"] = fhn.rng_seed;
  manifest["fhn"] = fhn_json;
  manifest["config_hash"] = hex64(kdmd::io::fnv1a(fhn_json.dump()));
  manifest["m"] = fhn.n_snapshots - 1;
  manifest["n"] = fhn.state_dim();
  manifest["dt"] = fhn.dt_sample;
  manifest["grid"] = {{"n_points", fhn.n_modes},
                      {"length", fhn.domain_length},
                      {"fields", {"v", "w"}}};

  json files = json::array();
  for (size_t t = 0; t < sets.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "traj_%03zu", t);
    if (cfg.format == "binary") {
      const fs::path path = out_dir / (std::string(name) + ".kdmd");
      kdmd::io::save_snapshots(sets[t], path);
      files.push_back(path.filename().string());
    } else {
      const fs::path xp = out_dir / (std::string(name) + "_x.csv");
      const fs::path yp = out_dir / (std::string(name) + "_y.csv");
      kdmd::io::save_snapshots_csv(sets[t], xp, yp);
      files.push_back(xp.filename().string());
    }
  }
  manifest["files"] = files;
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  std::cerr << "wrote " << files.size() << " trajectory files + manifest in " << elapsed
            << " s\n";
  return 0;
}

// ---------------------------------------------------------------------------

std::optional<json> grid_from_manifest(const fs::path& data_path) {
  const fs::path manifest_path = data_path.parent_path() / "manifest.json";
  if (!fs::exists(manifest_path)) return std::nullopt;
  try {
    std::ifstream in(manifest_path);
    json manifest;
    in >> manifest;
    if (!manifest.contains("grid") || !manifest.contains("files")) return std::nullopt;
    for (const auto& f : manifest.at("files"))
      if (f.get<std::string>() == data_path.filename().string())
        return manifest.at("grid");
  } catch (const std::exception& e) {
    std::cerr << "warning: ignoring unreadable manifest: " << e.what() << "\n";
  }
  return std::nullopt;
}

int cmd_fit(const kdmd::io::RunConfig& cfg, const std::string& data_path) {
  const kdmd::KernelSpec kernel = kdmd::KernelSpec::parse(cfg.kernel);
  const kdmd::TruncationPolicy policy = cfg.policy();

  const kdmd::SnapshotSet data = kdmd::io::load_snapshots_auto(data_path);
  std::cerr << "fit: M=" << data.count() << " N=" << data.dim()
            << " kernel=" << kernel.to_string() << "\n";

  const auto t0 = std::chrono::steady_clock::now();
  const kdmd::KoopmanDecomposition d = kdmd::fit(data, kernel, policy, cfg.normalize);
  const kdmd::Reconstruction rec = kdmd::reconstruct(d);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path out_dir(cfg.out);
  fs::create_directories(out_dir);
  const fs::path json_path =
      out_dir / (fs::path(data_path).stem().string() + "_decomposition.json");

  json extra;
  extra["source"] = fs::path(data_path).filename().string();
  extra["normalized"] = cfg.normalize;
  extra["truncation"] = policy.mode == kdmd::TruncationPolicy::Mode::fixed_rank
                            ? json{{"mode", "fixed-rank"}, {"rank", policy.rank}}
                            : json{{"mode", "relative-threshold"},
                                   {"threshold", policy.threshold}};
  extra["reconstruction_residual"] = rec.residual;
  if (auto grid = grid_from_manifest(data_path)) extra["grid"] = *grid;
  kdmd::io::save_decomposition(d, json_path, extra);

  // Wall time goes to the console only; files stay deterministic.
  std::cout << "rank " << d.rank() << ", gram condition " << d.gram_condition
            << ", eigenbasis condition " << d.vhat_condition
            << ", reconstruction residual " << rec.residual << ", wall time " << elapsed
            << " s\n";
  if (d.singular_eigenbasis)
    std::cerr << "warning: ill-conditioned eigenbasis, modes via pseudoinverse\n";
  std::cout << "wrote " << json_path.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_eval(const kdmd::io::RunConfig& cfg, const std::string& decomp_path,
             const std::string& states_path) {
  const kdmd::KoopmanDecomposition d =
      kdmd::io::load_decomposition(decomp_path).decomposition;
  const Eigen::MatrixXd states = kdmd::io::load_state_table(states_path);
  if (states.rows() > 0 && states.cols() != d.state_dim())
    throw kdmd::DimensionMismatch("states have dimension " + std::to_string(states.cols()) +
                                  ", decomposition expects " +
                                  std::to_string(d.state_dim()));

  const fs::path out_dir(cfg.out);
  fs::create_directories(out_dir);

  std::ostringstream efun, pred;
  for (int k = 0; k < d.rank(); ++k) {
    if (k) efun << ',';
    efun << "phi_" << k + 1 << "_re,phi_" << k + 1 << "_im";
  }
  efun << '\n';
  for (Eigen::Index j = 0; j < d.state_dim(); ++j) {
    if (j) pred << ',';
    pred << "y_" << j + 1;
  }
  pred << '\n';

  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    const Eigen::VectorXcd phi = kdmd::eigenfunction_at(d, states.row(i));
    for (int k = 0; k < d.rank(); ++k) {
      if (k) efun << ',';
      efun << kdmd::io::detail::format_double(phi[k].real()) << ','
           << kdmd::io::detail::format_double(phi[k].imag());
    }
    efun << '\n';
    const Eigen::VectorXd y = kdmd::predict(d, states.row(i));
    for (Eigen::Index j = 0; j < y.size(); ++j) {
      if (j) pred << ',';
      pred << kdmd::io::detail::format_double(y[j]);
    }
    pred << '\n';
  }
  write_text(out_dir / "eigenfunctions.csv", efun.str());
  write_text(out_dir / "predictions.csv", pred.str());
  std::cout << "evaluated " << states.rows() << " states\n";
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_compare(const kdmd::io::RunConfig& cfg, const std::string& path_a,
                const std::string& path_b) {
  const kdmd::KoopmanDecomposition a = kdmd::io::load_decomposition(path_a).decomposition;
  const kdmd::KoopmanDecomposition b = kdmd::io::load_decomposition(path_b).decomposition;

  const kdmd::SpectrumMatch m = kdmd::match_spectra(a.mu, b.mu, cfg.tol);

  std::ostringstream table;
  table << "status,index_a,index_b,re_a,im_a,re_b,im_b,distance\n";
  for (const auto& pair : m.matched) {
    table << "matched," << pair.index_a << ',' << pair.index_b << ','
          << kdmd::io::detail::format_double(a.mu[pair.index_a].real()) << ','
          << kdmd::io::detail::format_double(a.mu[pair.index_a].imag()) << ','
          << kdmd::io::detail::format_double(b.mu[pair.index_b].real()) << ','
          << kdmd::io::detail::format_double(b.mu[pair.index_b].imag()) << ','
          << kdmd::io::detail::format_double(pair.distance) << '\n';
  }
  for (int i : m.unmatched_a)
    table << "unmatched_a," << i << ",," << kdmd::io::detail::format_double(a.mu[i].real())
          << ',' << kdmd::io::detail::format_double(a.mu[i].imag()) << ",,,\n";
  for (int j : m.unmatched_b)
    table << "unmatched_b,," << j << ",,,"
          << kdmd::io::detail::format_double(b.mu[j].real()) << ','
          << kdmd::io::detail::format_double(b.mu[j].imag()) << ",\n";

  const fs::path out_dir(cfg.out);
  fs::create_directories(out_dir);
  write_text(out_dir / "compare.csv", table.str());

  std::cout << table.str();
  std::cout << "matched " << m.matched.size() << ", unmatched " << m.unmatched_a.size()
            << "+" << m.unmatched_b.size() << ", max distance "
            << kdmd::io::detail::format_double(m.max_distance) << ", tol "
            << kdmd::io::detail::format_double(cfg.tol) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_export_plots(const kdmd::io::RunConfig& cfg, const std::string& decomp_path) {
  const kdmd::io::DecompositionFile file = kdmd::io::load_decomposition(decomp_path);
  const kdmd::KoopmanDecomposition& d = file.decomposition;

  const fs::path out_dir(cfg.out);
  fs::create_directories(out_dir);

  // Eigenvalue scatter: discrete and (when present) continuous values.
  {
    std::ostringstream table;
    table << "index,re_mu,im_mu,re_lambda,im_lambda\n";
    for (int k = 0; k < d.rank(); ++k) {
      table << k << ',' << kdmd::io::detail::format_double(d.mu[k].real()) << ','
            << kdmd::io::detail::format_double(d.mu[k].imag()) << ',';
      if (d.has_dt && !std::isnan(d.lambda[k].real()))
        table << kdmd::io::detail::format_double(d.lambda[k].real()) << ','
              << kdmd::io::detail::format_double(d.lambda[k].imag());
      else
        table << ',';
      table << '\n';
    }
    write_text(out_dir / "eigenvalues.csv", table.str());
  }

  if (cfg.criterion != "slowest-decay" && cfg.criterion != "largest-magnitude")
    throw kdmd::ConfigError("unknown criterion '" + cfg.criterion + "'");
  std::vector<int> selected =
      cfg.criterion == "largest-magnitude"
          ? kdmd::select_tuples(d, kdmd::SelectionCriterion::largest_magnitude())
          : kdmd::select_tuples(d, kdmd::SelectionCriterion::slowest_decay());
  if (static_cast<int>(selected.size()) > cfg.top)
    selected.resize(static_cast<size_t>(std::max(cfg.top, 0)));

  // Mode index table (header-only when nothing is selected).
  {
    std::ostringstream table;
    table << "mode,eigenvalue_index,re_mu,im_mu\n";
    for (size_t r = 0; r < selected.size(); ++r)
      table << r + 1 << ',' << selected[r] << ','
            << kdmd::io::detail::format_double(d.mu[selected[r]].real()) << ','
            << kdmd::io::detail::format_double(d.mu[selected[r]].imag()) << '\n';
    write_text(out_dir / "modes_index.csv", table.str());
  }

  // Spatial profiles of the selected physical-unit modes. With grid metadata
  // the state splits into the two stacked fields.
  const Eigen::MatrixXcd modes = d.physical_modes();
  int grid_points = 0;
  double grid_length = 0.0;
  std::vector<std::string> field_names;
  if (file.metadata.contains("grid")) {
    const auto& grid = file.metadata.at("grid");
    grid_points = grid.value("n_points", 0);
    grid_length = grid.value("length", 0.0);
    if (grid.contains("fields"))
      for (const auto& f : grid.at("fields")) field_names.push_back(f.get<std::string>());
  }
  const bool split = grid_points > 0 && field_names.size() == 2 &&
                     2 * grid_points == d.state_dim();

  for (size_t r = 0; r < selected.size(); ++r) {
    const Eigen::RowVectorXcd mode = modes.row(selected[r]);
    char stem[32];
    std::snprintf(stem, sizeof(stem), "mode_%02zu", r + 1);
    if (split) {
      for (int f = 0; f < 2; ++f) {
        std::ostringstream table;
        table << "x,re,im\n";
        for (int j = 0; j < grid_points; ++j) {
          const double x = (j + 0.5) * grid_length / grid_points;
          const auto v = mode[f * grid_points + j];
          table << kdmd::io::detail::format_double(x) << ','
                << kdmd::io::detail::format_double(v.real()) << ','
                << kdmd::io::detail::format_double(v.imag()) << '\n';
        }
        write_text(out_dir / (std::string(stem) + "_" + field_names[static_cast<size_t>(f)] +
                              ".csv"),
                   table.str());
      }
    } else {
      std::ostringstream table;
      table << "index,re,im\n";
      for (Eigen::Index j = 0; j < mode.size(); ++j)
        table << j << ',' << kdmd::io::detail::format_double(mode[j].real()) << ','
              << kdmd::io::detail::format_double(mode[j].imag()) << '\n';
      write_text(out_dir / (std::string(stem) + ".csv"), table.str());
    }
  }
  std::cout << "exported " << selected.size() << " modes\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel-based Koopman spectral analysis"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string data_path, decomp_path, states_path, compare_a, compare_b;

  CLI::App* simulate =
      app.add_subcommand("simulate", "generate the reaction-diffusion dataset");
  add_common_flags(simulate, flags);

  CLI::App* fit = app.add_subcommand("fit", "fit a Koopman decomposition to snapshot pairs");
  add_common_flags(fit, flags);
  fit->add_option("data", data_path, "snapshot file (binary container or CSV x-file)")
      ->required();

  CLI::App* eval = app.add_subcommand("eval", "evaluate eigenfunctions and predictions");
  add_common_flags(eval, flags);
  eval->add_option("decomposition", decomp_path, "decomposition JSON path")->required();
  eval->add_option("states", states_path, "CSV of states, one per row")->required();

  CLI::App* compare = app.add_subcommand("compare", "match two spectra");
  add_common_flags(compare, flags);
  compare->add_option("a", compare_a, "first decomposition JSON")->required();
  compare->add_option("b", compare_b, "second decomposition JSON")->required();

  CLI::App* exportp = app.add_subcommand("export-plots", "write plot-ready tables");
  add_common_flags(exportp, flags);
  exportp->add_option("decomposition", decomp_path, "decomposition JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(resolve_config(*simulate, flags));
    if (fit->parsed()) return cmd_fit(resolve_config(*fit, flags), data_path);
    if (eval->parsed())
      return cmd_eval(resolve_config(*eval, flags), decomp_path, states_path);
    if (compare->parsed())
      return cmd_compare(resolve_config(*compare, flags), compare_a, compare_b);
    if (exportp->parsed())
      return cmd_export_plots(resolve_config(*exportp, flags), decomp_path);
  } catch (const kdmd::KdmdError& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case kdmd::ErrorKind::config: return 2;
      case kdmd::ErrorKind::data: return 3;
      case kdmd::ErrorKind::numerical: return 4;
    }
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 2;
}
