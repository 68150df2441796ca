#pragma once

#include <Eigen/Dense>
#include <bit>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kdmd/errors.hpp"
#include "kdmd/koopman.hpp"
#include "kdmd/types.hpp"

namespace kdmd::io {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian");

namespace detail {

constexpr char kMagic[4] = {'K', 'D', 'M', 'D'};
constexpr std::uint32_t kSnapshotVersion = 1;

inline void write_real_block(std::ofstream& out, const Eigen::MatrixXd& m) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> tmp = m;
  out.write(reinterpret_cast<const char*>(tmp.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(tmp.size())));
}

inline Eigen::MatrixXd read_real_block(std::ifstream& in, Eigen::Index rows,
                                       Eigen::Index cols, const std::string& what) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> tmp(rows, cols);
  in.read(reinterpret_cast<char*>(tmp.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(tmp.size())));
  if (!in) throw IoError("truncated block '" + what + "'");
  return tmp;
}

inline void write_complex_block(std::ofstream& out, const Eigen::MatrixXcd& m) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> tmp(m.rows(),
                                                                             2 * m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      tmp(i, 2 * j) = m(i, j).real();
      tmp(i, 2 * j + 1) = m(i, j).imag();
    }
  out.write(reinterpret_cast<const char*>(tmp.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(tmp.size())));
}

inline Eigen::MatrixXcd read_complex_block(std::ifstream& in, Eigen::Index rows,
                                           Eigen::Index cols, const std::string& what) {
  const Eigen::MatrixXd tmp = read_real_block(in, rows, 2 * cols, what);
  Eigen::MatrixXcd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      m(i, j) = {tmp(i, 2 * j), tmp(i, 2 * j + 1)};
  return m;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// FNV-1a over a byte string; used for stable config hashes in manifests.
inline std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Snapshot container: magic "KDMD", u32 version, u64 M, u64 N, f64 dt
// (0 = absent), then the X block and the Y block as row-major f64.
// ---------------------------------------------------------------------------

inline void save_snapshots(const SnapshotSet& s, const std::filesystem::path& path) {
  s.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(detail::kMagic, 4);
  const std::uint32_t version = detail::kSnapshotVersion;
  const std::uint64_t m = static_cast<std::uint64_t>(s.count());
  const std::uint64_t n = static_cast<std::uint64_t>(s.dim());
  const double dt = s.dt.value_or(0.0);
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(reinterpret_cast<const char*>(&m), sizeof(m));
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(&dt), sizeof(dt));
  detail::write_real_block(out, s.x);
  detail::write_real_block(out, s.y);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline bool is_snapshot_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  return in && std::equal(magic, magic + 4, detail::kMagic);
}

inline SnapshotSet load_snapshots(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || !std::equal(magic, magic + 4, detail::kMagic))
    throw IoError("'" + path.string() + "' is not a KDMD snapshot file");
  std::uint32_t version = 0;
  std::uint64_t m = 0, n = 0;
  double dt = 0.0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&m), sizeof(m));
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  in.read(reinterpret_cast<char*>(&dt), sizeof(dt));
  if (!in) throw IoError("truncated header in '" + path.string() + "'");
  if (version != detail::kSnapshotVersion)
    throw IoError("unsupported snapshot version in '" + path.string() + "'");
  if (m < 1 || n < 1 || m > (1ull << 32) || n > (1ull << 32))
    throw IoError("implausible dimensions in '" + path.string() + "'");
  SnapshotSet s;
  s.x = detail::read_real_block(in, static_cast<Eigen::Index>(m),
                                static_cast<Eigen::Index>(n), "X");
  s.y = detail::read_real_block(in, static_cast<Eigen::Index>(m),
                                static_cast<Eigen::Index>(n), "Y");
  if (dt > 0.0) s.dt = dt;
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// CSV alternative: two files sharing a "# M=...,N=...,dt=..." header line,
// one holding the x rows and one the y rows. dt= is omitted for discrete-time
// data. Values are %.17g, which round-trips doubles exactly.
// ---------------------------------------------------------------------------

inline void write_csv_matrix(std::ofstream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << detail::format_double(m(i, j));
    }
    out << '\n';
  }
}

inline void save_snapshots_csv(const SnapshotSet& s, const std::filesystem::path& x_path,
                               const std::filesystem::path& y_path) {
  s.validate();
  std::ostringstream header;
  header << "# M=" << s.count() << ",N=" << s.dim();
  if (s.dt) header << ",dt=" << detail::format_double(*s.dt);
  for (const auto& [path, matrix] :
       {std::pair{x_path, &s.x}, std::pair{y_path, &s.y}}) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << header.str() << '\n';
    write_csv_matrix(out, *matrix);
    if (!out) throw IoError("write failed for '" + path.string() + "'");
  }
}

namespace detail {

struct CsvHeader {
  Eigen::Index m = 0, n = 0;
  std::optional<double> dt;
};

inline CsvHeader parse_csv_header(const std::string& line, const std::string& file) {
  CsvHeader h;
  long long m = 0, n = 0;
  double dt = 0.0;
  if (std::sscanf(line.c_str(), "# M=%lld,N=%lld,dt=%lf", &m, &n, &dt) == 3) {
    h.dt = dt;
  } else if (std::sscanf(line.c_str(), "# M=%lld,N=%lld", &m, &n) != 2) {
    throw IoError("malformed CSV header in '" + file + "': " + line);
  }
  if (m < 1 || n < 1) throw IoError("bad dimensions in CSV header of '" + file + "'");
  h.m = m;
  h.n = n;
  return h;
}

inline Eigen::MatrixXd read_csv_rows(std::ifstream& in, Eigen::Index m, Eigen::Index n,
                                     const std::string& file) {
  Eigen::MatrixXd out(m, n);
  std::string line;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!std::getline(in, line)) throw IoError("truncated CSV data in '" + file + "'");
    std::stringstream ss(line);
    std::string cell;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!std::getline(ss, cell, ','))
        throw IoError("short row " + std::to_string(i) + " in '" + file + "'");
      size_t used = 0;
      try {
        out(i, j) = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw IoError("unparsable value '" + cell + "' in '" + file + "'");
      }
    }
  }
  return out;
}

}  // namespace detail

inline SnapshotSet load_snapshots_csv(const std::filesystem::path& x_path,
                                      const std::filesystem::path& y_path) {
  SnapshotSet s;
  detail::CsvHeader hx;
  {
    std::ifstream in(x_path);
    if (!in) throw IoError("cannot open '" + x_path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty file '" + x_path.string() + "'");
    hx = detail::parse_csv_header(line, x_path.string());
    s.x = detail::read_csv_rows(in, hx.m, hx.n, x_path.string());
  }
  {
    std::ifstream in(y_path);
    if (!in) throw IoError("cannot open '" + y_path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty file '" + y_path.string() + "'");
    const detail::CsvHeader hy = detail::parse_csv_header(line, y_path.string());
    if (hy.m != hx.m || hy.n != hx.n)
      throw IoError("CSV pair dimension mismatch between '" + x_path.string() + "' and '" +
                    y_path.string() + "'");
    s.y = detail::read_csv_rows(in, hy.m, hy.n, y_path.string());
  }
  s.dt = hx.dt;
  s.validate();
  return s;
}

/// The conventional y-file path for a CSV pair: base_x.csv -> base_y.csv.
inline std::filesystem::path csv_partner_path(const std::filesystem::path& x_path) {
  std::string stem = x_path.stem().string();
  if (stem.size() >= 2 && stem.ends_with("_x")) {
    stem.replace(stem.size() - 2, 2, "_y");
    return x_path.parent_path() / (stem + x_path.extension().string());
  }
  return x_path.parent_path() / (stem + "_y" + x_path.extension().string());
}

/// Loads either format: the binary container, or a CSV x-file whose partner
/// is found by naming convention.
inline SnapshotSet load_snapshots_auto(const std::filesystem::path& path) {
  if (is_snapshot_file(path)) return load_snapshots(path);
  if (path.extension() == ".csv") return load_snapshots_csv(path, csv_partner_path(path));
  throw IoError("'" + path.string() + "' is neither a KDMD container nor a CSV x-file");
}

// ---------------------------------------------------------------------------
// Decomposition files: a JSON document for scalars and eigenvalues plus a
// binary sidecar for the matrices, complex entries stored as (re, im) pairs.
// Stored matrices are in the fitted frame; divide modes by "scale" for
// physical units.
// ---------------------------------------------------------------------------

inline nlohmann::json complex_vector_to_json(const Eigen::VectorXcd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    out.push_back({v[i].real(), v[i].imag()});
  return out;
}

inline Eigen::VectorXcd complex_vector_from_json(const nlohmann::json& j) {
  Eigen::VectorXcd v(j.size());
  Eigen::Index i = 0;
  for (const auto& entry : j) v[i++] = {entry.at(0).get<double>(), entry.at(1).get<double>()};
  return v;
}

inline void save_decomposition(const KoopmanDecomposition& d,
                               const std::filesystem::path& json_path,
                               const nlohmann::json& extra = nlohmann::json::object()) {
  const std::filesystem::path bin_path =
      json_path.parent_path() / (json_path.stem().string() + ".bin");

  nlohmann::json j;
  j["format"] = "kdmd-decomposition";
  j["version"] = 1;
  j["kernel"] = d.kernel.to_string();
  j["m"] = d.snapshot_count();
  j["n"] = d.state_dim();
  j["rank"] = d.rank();
  j["scale"] = d.scale;
  if (d.has_dt) j["dt"] = d.dt;
  j["flags"] = {{"singular_eigenbasis", d.singular_eigenbasis},
                {"degenerate_eigenvalues", d.degenerate_eigenvalues},
                {"negative_real_mu", d.negative_real_mu}};
  j["diagnostics"] = {{"gram_condition", d.gram_condition},
                      {"vhat_condition", d.vhat_condition}};
  j["mu"] = complex_vector_to_json(d.mu);
  if (d.has_dt) {
    nlohmann::json lam = nlohmann::json::array();
    for (Eigen::Index k = 0; k < d.lambda.size(); ++k) {
      if (std::isnan(d.lambda[k].real()))
        lam.push_back(nullptr);
      else
        lam.push_back({d.lambda[k].real(), d.lambda[k].imag()});
    }
    j["lambda"] = lam;
  }
  j["sidecar"] = bin_path.filename().string();
  j["blocks"] = {// order matters: the sidecar is written in this sequence
                 {{"name", "q"}, {"rows", d.basis.q.rows()}, {"cols", d.basis.q.cols()}, {"complex", false}},
                 {{"name", "sigma"}, {"rows", d.basis.sigma.size()}, {"cols", 1}, {"complex", false}},
                 {{"name", "phi_x"}, {"rows", d.phi_x.rows()}, {"cols", d.phi_x.cols()}, {"complex", true}},
                 {{"name", "modes"}, {"rows", d.modes.rows()}, {"cols", d.modes.cols()}, {"complex", true}},
                 {{"name", "efun_coeff"}, {"rows", d.efun_coeff.rows()}, {"cols", d.efun_coeff.cols()}, {"complex", true}},
                 {{"name", "x_train"}, {"rows", d.x_train.rows()}, {"cols", d.x_train.cols()}, {"complex", false}}};
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();

  std::ofstream out(json_path);
  if (!out) throw IoError("cannot open '" + json_path.string() + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + json_path.string() + "'");

  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot open '" + bin_path.string() + "' for writing");
  detail::write_real_block(bin, d.basis.q);
  detail::write_real_block(bin, d.basis.sigma);
  detail::write_complex_block(bin, d.phi_x);
  detail::write_complex_block(bin, d.modes);
  detail::write_complex_block(bin, d.efun_coeff);
  detail::write_real_block(bin, d.x_train);
  if (!bin) throw IoError("write failed for '" + bin_path.string() + "'");
}

struct DecompositionFile {
  KoopmanDecomposition decomposition;
  nlohmann::json metadata;
};

inline DecompositionFile load_decomposition(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw IoError("cannot open '" + json_path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed decomposition file '" + json_path.string() + "': " + e.what());
  }
  if (j.value("format", "") != "kdmd-decomposition")
    throw IoError("'" + json_path.string() + "' is not a decomposition file");

  DecompositionFile out;
  out.metadata = j;
  KoopmanDecomposition& d = out.decomposition;
  try {
    d.kernel = KernelSpec::parse(j.at("kernel").get<std::string>());
    d.scale = j.at("scale").get<double>();
    d.mu = complex_vector_from_json(j.at("mu"));
    if (j.contains("dt")) {
      d.has_dt = true;
      d.dt = j.at("dt").get<double>();
      d.lambda.resize(d.mu.size());
      const auto& lam = j.at("lambda");
      for (Eigen::Index k = 0; k < d.lambda.size(); ++k) {
        const auto& entry = lam.at(static_cast<size_t>(k));
        if (entry.is_null())
          d.lambda[k] = {std::numeric_limits<double>::quiet_NaN(),
                         std::numeric_limits<double>::quiet_NaN()};
        else
          d.lambda[k] = {entry.at(0).get<double>(), entry.at(1).get<double>()};
      }
    }
    const auto& flags = j.at("flags");
    d.singular_eigenbasis = flags.at("singular_eigenbasis").get<bool>();
    d.degenerate_eigenvalues = flags.at("degenerate_eigenvalues").get<bool>();
    d.negative_real_mu = flags.at("negative_real_mu").get<bool>();
    const auto& diag = j.at("diagnostics");
    d.gram_condition = diag.at("gram_condition").get<double>();
    d.vhat_condition = diag.at("vhat_condition").get<double>();

    const std::filesystem::path bin_path =
        json_path.parent_path() / j.at("sidecar").get<std::string>();
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw IoError("cannot open sidecar '" + bin_path.string() + "'");
    const auto& blocks = j.at("blocks");
    auto dims = [&blocks](const char* name) {
      for (const auto& b : blocks)
        if (b.at("name") == name)
          return std::pair<Eigen::Index, Eigen::Index>(b.at("rows").get<Eigen::Index>(),
                                                       b.at("cols").get<Eigen::Index>());
      throw IoError(std::string("missing block '") + name + "'");
    };
    auto [qr, qc] = dims("q");
    d.basis.q = detail::read_real_block(bin, qr, qc, "q");
    auto [sr, sc] = dims("sigma");
    d.basis.sigma = detail::read_real_block(bin, sr, sc, "sigma").col(0);
    auto [pr, pc] = dims("phi_x");
    d.phi_x = detail::read_complex_block(bin, pr, pc, "phi_x");
    auto [mr, mc] = dims("modes");
    d.modes = detail::read_complex_block(bin, mr, mc, "modes");
    auto [er, ec] = dims("efun_coeff");
    d.efun_coeff = detail::read_complex_block(bin, er, ec, "efun_coeff");
    auto [xr, xc] = dims("x_train");
    d.x_train = detail::read_real_block(bin, xr, xc, "x_train");
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed decomposition file '" + json_path.string() + "': " + e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plain CSV state tables (no snapshot pairing): optional "# M=...,N=..."
// header, one state per row. Used for eval inputs and plot exports.
// ---------------------------------------------------------------------------

inline Eigen::MatrixXd load_state_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError("unparsable value '" + cell + "' in '" + path.string() + "'");
      }
    }
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows[0].size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size())
      throw IoError("ragged rows in '" + path.string() + "'");
    for (size_t j = 0; j < rows[i].size(); ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run configuration: one flat JSON document, every key optional, unknown keys
// rejected. CLI flags override file values.
// ---------------------------------------------------------------------------

struct RunConfig {
  std::string kernel = "polynomial:20";
  std::optional<int> rank;
  std::optional<double> threshold;
  bool normalize = true;
  std::uint64_t seed = 0;
  std::string out = ".";
  int top = 8;
  std::string criterion = "slowest-decay";
  double tol = 1e-6;
  // simulate settings
  int trajectories = 5;
  int snapshots = 2500;
  double dt_internal = 0.01;
  double forcing_stddev = 0.1;
  std::string format = "binary";  // or "csv"

  /// Effective truncation policy: explicit threshold wins over rank; the
  /// default is the reference fixed rank of 150.
  TruncationPolicy policy() const {
    if (rank && threshold)
      throw ConfigError("give either 'rank' or 'threshold', not both");
    if (threshold) return TruncationPolicy::relative_threshold(*threshold);
    return TruncationPolicy::fixed_rank(rank.value_or(150));
  }
};

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config '" + path.string() + "': " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  RunConfig cfg;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& key = it.key();
      if (key == "kernel") cfg.kernel = it->get<std::string>();
      else if (key == "rank") cfg.rank = it->get<int>();
      else if (key == "threshold") cfg.threshold = it->get<double>();
      else if (key == "normalize") cfg.normalize = it->get<bool>();
      else if (key == "seed") cfg.seed = it->get<std::uint64_t>();
      else if (key == "out") cfg.out = it->get<std::string>();
      else if (key == "top") cfg.top = it->get<int>();
      else if (key == "criterion") cfg.criterion = it->get<std::string>();
      else if (key == "tol") cfg.tol = it->get<double>();
      else if (key == "trajectories") cfg.trajectories = it->get<int>();
      else if (key == "snapshots") cfg.snapshots = it->get<int>();
      else if (key == "dt-internal") cfg.dt_internal = it->get<double>();
      else if (key == "forcing-stddev") cfg.forcing_stddev = it->get<double>();
      else if (key == "format") cfg.format = it->get<std::string>();
      else throw ConfigError("unknown config key '" + key + "' in '" + path.string() + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad value type in config '" + path.string() + "': " + e.what());
  }
  return cfg;
}

}  // namespace kdmd::io
