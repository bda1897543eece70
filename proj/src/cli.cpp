#include "ncw/cli.hpp"

#include <charconv>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "ncw/linalg.hpp"
#include "ncw/outliers.hpp"

namespace ncw::cli {

namespace fs = std::filesystem;

namespace {

// ---- JSON field access -------------------------------------------------------

void check_keys(const Json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || item.key() == a;
    if (!known) throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

double get_double(const Json& obj, const char* key, const std::string& where, std::optional<double> fallback = {}) {
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(where + ": missing '" + key + "'");
  }
  const Json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(where + ": '" + key + "' must be a number");
  return v.get<double>();
}

long long get_int(const Json& obj, const char* key, const std::string& where, std::optional<long long> fallback = {}) {
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(where + ": missing '" + key + "'");
  }
  const Json& v = obj.at(key);
  if (!v.is_number_integer()) throw ConfigError(where + ": '" + key + "' must be an integer");
  return v.get<long long>();
}

int get_dim(const Json& obj, const char* key, const std::string& where, std::optional<long long> fallback = {}) {
  const long long v = get_int(obj, key, where, fallback);
  if (v < 1 || v > 1'000'000) throw ConfigError(where + ": '" + key + "' out of range");
  return static_cast<int>(v);
}

Matrix matrix_from_json(const Json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ConfigError(where + ": expected a non-empty array of rows");
  const std::size_t rows = v.size();
  const std::size_t cols = v.front().is_array() ? v.front().size() : 0;
  if (cols == 0) throw ConfigError(where + ": rows must be non-empty arrays");
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!v[i].is_array() || v[i].size() != cols) throw ConfigError(where + ": ragged matrix");
    for (std::size_t j = 0; j < cols; ++j) {
      if (!v[i][j].is_number()) throw ConfigError(where + ": non-numeric entry");
      m(i, j) = v[i][j].get<double>();
    }
  }
  return m;
}

// ---- ensemble sources ----------------------------------------------------------

EnsembleSource parse_builder(const Json& e, const std::string& where) {
  const std::string name = e.at("builder").get<std::string>();
  EnsembleSource src;
  Json& d = src.description;
  d["builder"] = name;
  const int beta = static_cast<int>(get_int(e, "beta", where, 1));
  if (name == "fig1") {
    check_keys(e, where, {"builder", "n", "mu", "beta"});
    const int n = get_dim(e, "n", where);
    const double mu = get_double(e, "mu", where);
    src.spec = build_fig1_model(n, mu, beta);
    d["n"] = n;
    d["mu"] = mu;
  } else if (name == "fig2") {
    check_keys(e, where, {"builder", "n", "mu0", "mu", "beta"});
    const int n = get_dim(e, "n", where);
    const double mu0 = get_double(e, "mu0", where);
    const double mu = get_double(e, "mu", where);
    src.spec = build_fig2_model(n, mu0, mu, beta);
    d["n"] = n;
    d["mu0"] = mu0;
    d["mu"] = mu;
  } else if (name == "equal_cross") {
    check_keys(e, where, {"builder", "n", "t", "sigma2", "mu0_sq", "mu", "beta"});
    const int n = get_dim(e, "n", where);
    const int t = get_dim(e, "t", where, 2LL * n);
    const double sigma2 = get_double(e, "sigma2", where, 1.0);
    const double mu0_sq = get_double(e, "mu0_sq", where);
    const double mu = get_double(e, "mu", where, 0.0);
    if (mu0_sq < 0.0 || mu0_sq >= 1.0) throw ConfigError(where + ": mu0_sq must lie in [0, 1)");
    src.spec = build_equal_cross_model(n, t, sigma2, mu0_sq, mu, beta);
    d["n"] = n;
    d["t"] = t;
    d["sigma2"] = sigma2;
    d["mu0_sq"] = mu0_sq;
    d["mu"] = mu;
  } else if (name == "identity") {
    check_keys(e, where, {"builder", "n", "t", "sigma2", "beta"});
    const int n = get_dim(e, "n", where);
    const int t = get_dim(e, "t", where, 2LL * n);
    const double sigma2 = get_double(e, "sigma2", where, 1.0);
    src.spec = build_identity_model(n, t, sigma2, beta);
    d["n"] = n;
    d["t"] = t;
    d["sigma2"] = sigma2;
  } else {
    throw ConfigError(where + ": unknown builder '" + name + "'");
  }
  d["beta"] = beta;
  return src;
}

// Explicit ensemble: xi and b inline, from CSV files, or the shorthands
// "identity" / "zero".
EnsembleSource parse_explicit(const Json& e, const std::string& where, const fs::path& base_dir) {
  check_keys(e, where, {"n", "t", "sigma2", "beta", "xi", "xi_file", "b", "b_file"});
  EnsembleSource src;
  Json& d = src.description;

  auto load = [&](const char* inline_key, const char* file_key, const char* shorthand,
                  Matrix& out) -> std::optional<std::string> {
    if (e.contains(inline_key) && e.contains(file_key)) {
      throw ConfigError(where + ": give either '" + inline_key + "' or '" + file_key + "'");
    }
    if (e.contains(file_key)) {
      const fs::path p = (base_dir / e.at(file_key).get<std::string>()).lexically_normal();
      out = read_matrix_csv(p);
      d[file_key] = p.string();
      return std::nullopt;
    }
    if (e.contains(inline_key)) {
      const Json& v = e.at(inline_key);
      if (v.is_string()) {
        if (v.get<std::string>() != shorthand) throw ConfigError(where + ": unknown shorthand for " + inline_key);
        return shorthand;
      }
      out = matrix_from_json(v, where + "." + inline_key);
      d[inline_key] = v;
      return std::nullopt;
    }
    return shorthand;
  };

  Matrix xi, b;
  const auto xi_short = load("xi", "xi_file", "identity", xi);
  const auto b_short = load("b", "b_file", "zero", b);

  long long n_guess = xi_short ? (b_short ? 0 : b.rows()) : xi.rows();
  const int n = get_dim(e, "n", where, n_guess > 0 ? std::optional<long long>(n_guess) : std::nullopt);
  const long long t_guess = b_short ? 2LL * n : b.cols();
  const int t = get_dim(e, "t", where, t_guess);
  const double sigma2 = get_double(e, "sigma2", where, 1.0);
  const int beta = static_cast<int>(get_int(e, "beta", where, 1));
  if (xi_short) {
    xi = Matrix::Identity(n, n);
    d["xi"] = *xi_short;
  }
  if (b_short) {
    b = Matrix::Zero(n, t);
    d["b"] = *b_short;
  }
  if (xi.rows() != n || xi.cols() != n) throw ConfigError(where + ": xi must be n x n");
  if (b.rows() != n || b.cols() != t) throw ConfigError(where + ": b must be n x t");
  src.spec = make_spec(n, t, sigma2, beta, std::move(xi), std::move(b));
  d["n"] = n;
  d["t"] = t;
  d["sigma2"] = sigma2;
  d["beta"] = beta;
  return src;
}

EnsembleSource parse_ensemble(const Json& e, const std::string& where, const fs::path& base_dir) {
  if (!e.is_object()) throw ConfigError(where + ": expected an object");
  if (e.contains("builder")) {
    if (!e.at("builder").is_string()) throw ConfigError(where + ": 'builder' must be a string");
    return parse_builder(e, where);
  }
  return parse_explicit(e, where, base_dir);
}

// ---- output helpers ------------------------------------------------------------

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

void write_json(const fs::path& path, const Json& doc) { write_file(path, doc.dump(2) + "\n"); }

std::string curve_csv(const DensityCurve& c) {
  std::string s = "lambda,rho,converged,iterations\n";
  for (std::size_t k = 0; k < c.grid.size(); ++k) {
    s += num(c.grid[k]) + "," + num(c.rho[k]) + "," + (c.converged[k] ? "1" : "0") + "," +
         std::to_string(c.iterations[k]) + "\n";
  }
  return s;
}

std::string histogram_csv(const Histogram& h) {
  std::string s = "bin_left,bin_right,density\n";
  for (std::size_t i = 0; i < h.density.size(); ++i) {
    s += num(h.edges[i]) + "," + num(h.edges[i + 1]) + "," + num(h.density[i]) + "\n";
  }
  return s;
}

Json metadata(const std::string& command) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return {{"command", command}, {"generated_at", buf}};
}

bool too_many_failures(const DensityCurve& c) {
  return static_cast<double>(c.failures()) > 0.1 * static_cast<double>(c.grid.size());
}

Json curve_stats(const DensityCurve& c, int n) {
  long long total = 0;
  int most = 0;
  for (int it : c.iterations) {
    total += it;
    most = std::max(most, it);
  }
  return {{"points", c.grid.size()},
          {"failures", c.failures()},
          {"total_iterations", total},
          {"max_iterations", most},
          {"mass", curve_mass(c)},
          {"first_moment", curve_first_moment(c)},
          {"bulk_upper_edge", bulk_upper_edge(c, n)}};
}

McConfig mc_config(const RunConfig& cfg) { return cfg.mc.value_or(McConfig{}); }

const EnsembleSpec& sampled_spec(const RunConfig& cfg) {
  return cfg.mc_ensemble ? cfg.mc_ensemble->spec : cfg.ensemble.spec;
}

Json mc_summary(const McSpectrum& mc, const McConfig& mcc) {
  return {{"seed", mcc.seed},
          {"trials", mc.trials},
          {"bins", mcc.bins},
          {"failed_trials", mc.failures},
          {"mean_largest", mc.mean_largest},
          {"classification_edge", mc.classification_edge},
          {"outliers", mc.outliers}};
}

Json prediction_record(const OutlierPrediction& p, const std::string& method) {
  Json r = {{"status", "ok"}, {"method", method}, {"k", p.k}, {"valid", p.valid},
            {"threshold_lhs", p.threshold_lhs}, {"threshold_rhs", p.threshold_rhs}};
  // JSON has no infinity; an absent spike gives lambda_bar = null.
  r["lambda_bar"] = std::isfinite(p.lambda_bar) ? Json(p.lambda_bar) : Json(nullptr);
  return r;
}

std::vector<OutlierPrediction> valid_predictions(const Json& records) {
  std::vector<OutlierPrediction> out;
  for (const auto& r : records) {
    if (r.at("status") != "ok" || !r.at("valid").get<bool>() || r.at("lambda_bar").is_null()) continue;
    OutlierPrediction p;
    p.k = r.at("k").get<int>();
    p.lambda_bar = r.at("lambda_bar").get<double>();
    p.valid = true;
    p.threshold_lhs = r.at("threshold_lhs").get<double>();
    p.threshold_rhs = r.at("threshold_rhs").get<double>();
    out.push_back(p);
  }
  return out;
}

}  // namespace

// ---- configuration -----------------------------------------------------------------

Matrix read_matrix_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("matrix file not found: " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto first = cell.find_first_not_of(" \t");
      const auto last = cell.find_last_not_of(" \t");
      const std::string trimmed = first == std::string::npos ? "" : cell.substr(first, last - first + 1);
      double v = 0.0;
      const auto res = std::from_chars(trimmed.data(), trimmed.data() + trimmed.size(), v);
      if (trimmed.empty() || res.ec != std::errc() || res.ptr != trimmed.data() + trimmed.size()) {
        throw ConfigError(path.string() + ": bad number '" + trimmed + "'");
      }
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw ConfigError(path.string() + ": ragged matrix");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError(path.string() + ": empty matrix");
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

RunConfig parse_config(const Json& doc, const fs::path& base_dir) {
  check_keys(doc, "config",
             {"ensemble", "variant", "grid", "solver", "mc", "thresholds", "outliers", "mc_ensemble"});
  RunConfig cfg;
  if (!doc.contains("ensemble")) throw ConfigError("config: missing 'ensemble'");
  cfg.ensemble = parse_ensemble(doc.at("ensemble"), "ensemble", base_dir);
  const EnsembleSpec& spec = cfg.ensemble.spec;

  if (doc.contains("variant")) {
    if (!doc.at("variant").is_string()) throw ConfigError("variant: expected a string");
    cfg.variant = doc.at("variant").get<std::string>();
  }
  if (cfg.variant == "auto") {
    cfg.resolved = resolve_auto_variant(spec);
  } else {
    try {
      cfg.resolved = variant_from_string(cfg.variant);
    } catch (const Error&) {
      throw ConfigError("variant: expected cwe, ncwe, nccwe or auto");
    }
  }

  if (doc.contains("solver")) {
    const Json& s = doc.at("solver");
    check_keys(s, "solver", {"tol", "max_iter", "epsilon", "damping"});
    cfg.solver.tol = get_double(s, "tol", "solver", cfg.solver.tol);
    cfg.solver.max_iter = static_cast<int>(get_int(s, "max_iter", "solver", cfg.solver.max_iter));
    cfg.solver.epsilon = get_double(s, "epsilon", "solver", cfg.solver.epsilon);
    cfg.solver.damping = get_double(s, "damping", "solver", cfg.solver.damping);
  }
  if (!(cfg.solver.tol > 0.0)) throw ConfigError("solver: tol must be positive");
  if (cfg.solver.max_iter < 1) throw ConfigError("solver: max_iter must be >= 1");
  if (!(cfg.solver.epsilon > 0.0)) throw ConfigError("solver: epsilon must be positive");
  if (!(cfg.solver.damping > 0.0 && cfg.solver.damping <= 1.0)) throw ConfigError("solver: damping must lie in (0, 1]");

  if (doc.contains("grid")) {
    const Json& g = doc.at("grid");
    if (g.is_string()) {
      if (g.get<std::string>() != "auto") throw ConfigError("grid: expected \"auto\" or an object");
    } else {
      check_keys(g, "grid", {"min", "max", "points", "values"});
      if (g.contains("values")) {
        if (g.contains("min") || g.contains("max") || g.contains("points")) {
          throw ConfigError("grid: 'values' excludes min/max/points");
        }
        cfg.grid.mode = GridSpec::Mode::Values;
        if (!g.at("values").is_array() || g.at("values").size() < 2) {
          throw ConfigError("grid: 'values' needs at least two points");
        }
        for (const auto& v : g.at("values")) {
          if (!v.is_number()) throw ConfigError("grid: non-numeric value");
          cfg.grid.values.push_back(v.get<double>());
        }
      } else if (g.contains("min") || g.contains("max")) {
        cfg.grid.mode = GridSpec::Mode::Range;
        cfg.grid.min = get_double(g, "min", "grid");
        cfg.grid.max = get_double(g, "max", "grid");
        cfg.grid.points = static_cast<int>(get_int(g, "points", "grid", 200));
        if (!(cfg.grid.min < cfg.grid.max)) throw ConfigError("grid: min must be below max");
      } else {
        cfg.grid.points = static_cast<int>(get_int(g, "points", "grid", 200));
      }
    }
  }
  if (cfg.grid.mode != GridSpec::Mode::Values && cfg.grid.points < 2) {
    throw ConfigError("grid: at least two points required");
  }
  if (cfg.grid.mode == GridSpec::Mode::Values) {
    for (std::size_t i = 1; i < cfg.grid.values.size(); ++i) {
      if (!(cfg.grid.values[i] > cfg.grid.values[i - 1])) throw ConfigError("grid: values must be strictly ascending");
    }
  }
  {
    // Only a square ensemble has support reaching zero.
    const double lowest = cfg.grid.mode == GridSpec::Mode::Range    ? cfg.grid.min
                          : cfg.grid.mode == GridSpec::Mode::Values ? cfg.grid.values.front()
                                                                     : 1.0;
    const bool reaches_zero = std::abs(spec.kappa() - 1.0) < 1e-12;
    if (lowest < 0.0 || (lowest == 0.0 && !reaches_zero)) {
      throw ConfigError("grid: lambda must be positive (zero only when n = t)");
    }
  }

  if (doc.contains("mc")) {
    const Json& m = doc.at("mc");
    check_keys(m, "mc", {"trials", "seed", "bins", "bulk_edge_pad"});
    McConfig mc;
    mc.trials = static_cast<int>(get_int(m, "trials", "mc", mc.trials));
    const long long seed = get_int(m, "seed", "mc", static_cast<long long>(mc.seed));
    if (seed < 0) throw ConfigError("mc: seed must be non-negative");
    mc.seed = static_cast<std::uint64_t>(seed);
    mc.bins = static_cast<int>(get_int(m, "bins", "mc", mc.bins));
    mc.bulk_edge_pad = get_double(m, "bulk_edge_pad", "mc", mc.bulk_edge_pad);
    if (mc.trials < 1) throw ConfigError("mc: trials must be >= 1");
    if (mc.bins < 2) throw ConfigError("mc: bins must be >= 2");
    if (mc.bulk_edge_pad < 0.0) throw ConfigError("mc: bulk_edge_pad must be non-negative");
    cfg.mc = mc;
  }

  if (doc.contains("thresholds")) {
    const Json& t = doc.at("thresholds");
    check_keys(t, "thresholds", {"sup", "kolmogorov", "outlier_relative"});
    if (t.contains("sup")) cfg.thresholds.sup = get_double(t, "sup", "thresholds");
    if (t.contains("kolmogorov")) cfg.thresholds.kolmogorov = get_double(t, "kolmogorov", "thresholds");
    if (t.contains("outlier_relative")) {
      cfg.thresholds.outlier_relative = get_double(t, "outlier_relative", "thresholds");
    }
  }

  if (doc.contains("outliers")) {
    const Json& o = doc.at("outliers");
    check_keys(o, "outliers", {"k"});
    if (o.contains("k")) {
      if (!o.at("k").is_array()) throw ConfigError("outliers: 'k' must be a list");
      for (const auto& k : o.at("k")) {
        if (!k.is_number_integer() || k.get<long long>() < 1 || k.get<long long>() > spec.n) {
          throw ConfigError("outliers: k must be integers in [1, n]");
        }
        cfg.outlier_indices.push_back(k.get<int>());
      }
    }
  }

  if (doc.contains("mc_ensemble")) {
    cfg.mc_ensemble = parse_ensemble(doc.at("mc_ensemble"), "mc_ensemble", base_dir);
    if (cfg.mc_ensemble->spec.n != spec.n) throw ConfigError("mc_ensemble: n must match the ensemble");
  }
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc, path.parent_path());
}

Json config_to_json(const RunConfig& cfg) {
  Json doc;
  doc["ensemble"] = cfg.ensemble.description;
  doc["variant"] = cfg.variant;
  switch (cfg.grid.mode) {
    case GridSpec::Mode::Auto:
      doc["grid"] = {{"points", cfg.grid.points}};
      break;
    case GridSpec::Mode::Range:
      doc["grid"] = {{"min", cfg.grid.min}, {"max", cfg.grid.max}, {"points", cfg.grid.points}};
      break;
    case GridSpec::Mode::Values:
      doc["grid"] = {{"values", cfg.grid.values}};
      break;
  }
  doc["solver"] = {{"tol", cfg.solver.tol},
                   {"max_iter", cfg.solver.max_iter},
                   {"epsilon", cfg.solver.epsilon},
                   {"damping", cfg.solver.damping}};
  if (cfg.mc) {
    doc["mc"] = {{"trials", cfg.mc->trials},
                 {"seed", cfg.mc->seed},
                 {"bins", cfg.mc->bins},
                 {"bulk_edge_pad", cfg.mc->bulk_edge_pad}};
  }
  Json th = Json::object();
  if (cfg.thresholds.sup) th["sup"] = *cfg.thresholds.sup;
  if (cfg.thresholds.kolmogorov) th["kolmogorov"] = *cfg.thresholds.kolmogorov;
  if (cfg.thresholds.outlier_relative) th["outlier_relative"] = *cfg.thresholds.outlier_relative;
  if (!th.empty()) doc["thresholds"] = th;
  if (!cfg.outlier_indices.empty()) doc["outliers"] = {{"k", cfg.outlier_indices}};
  if (cfg.mc_ensemble) doc["mc_ensemble"] = cfg.mc_ensemble->description;
  return doc;
}

std::string spec_digest(const EnsembleSpec& spec) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  const int beta = static_cast<int>(spec.beta);
  feed(&spec.n, sizeof spec.n);
  feed(&spec.t, sizeof spec.t);
  feed(&spec.sigma2, sizeof spec.sigma2);
  feed(&beta, sizeof beta);
  feed(spec.xi.data(), sizeof(double) * static_cast<std::size_t>(spec.xi.size()));
  feed(spec.b.data(), sizeof(double) * static_cast<std::size_t>(spec.b.size()));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---- commands ------------------------------------------------------------------------

DensityCurve theory_curve(const RunConfig& cfg) {
  const PreparedEnsemble prepared(cfg.ensemble.spec, cfg.resolved);
  switch (cfg.grid.mode) {
    case GridSpec::Mode::Range:
      return density_curve(prepared, linspace(cfg.grid.min, cfg.grid.max, cfg.grid.points), cfg.solver);
    case GridSpec::Mode::Values:
      return density_curve(prepared, cfg.grid.values, cfg.solver);
    case GridSpec::Mode::Auto:
      break;
  }
  return bulk_density_curve(prepared, cfg.ensemble.spec, cfg.grid.points, cfg.solver);
}

Json outlier_records(const RunConfig& cfg) {
  const EnsembleSpec& spec = cfg.ensemble.spec;
  const double s = spec.sigma2;
  const double kappa = spec.kappa();
  Json records = Json::array();
  const Json& d = cfg.ensemble.description;

  if (d.value("builder", "") == "equal_cross") {
    const double mu0_sq = d.at("mu0_sq").get<double>();
    const double mu = d.at("mu").get<double>();
    if (mu == 0.0) {
      records.push_back(prediction_record(outlier_cwe_equal_cross(spec.n, mu0_sq, s, kappa), "cwe_equal_cross"));
    } else if (mu0_sq == 0.0) {
      records.push_back(prediction_record(outlier_ncwe_rank1(spec.n, mu * mu, s, kappa), "ncwe_rank1"));
    } else {
      records.push_back(
          prediction_record(outlier_nccwe_equal_cross(spec.n, mu0_sq, mu * mu, s, kappa), "nccwe_equal_cross"));
    }
    return records;
  }

  auto degenerate = [](int k, const std::string& why) {
    return Json{{"status", "degenerate"}, {"k", k}, {"reason", why}};
  };
  const std::vector<int> defaults{spec.n};
  const DerivedMatrices dm = derive_matrices(spec);

  switch (cfg.resolved) {
    case Variant::Cwe: {
      const SymmetricEigen eig = sym_eigen(spec.xi);
      for (int k : cfg.outlier_indices.empty() ? defaults : cfg.outlier_indices) {
        try {
          records.push_back(prediction_record(outlier_cwe_general(eig, k, s, kappa), "cwe_general"));
        } catch (const DegenerateEigenvalue& e) {
          records.push_back(degenerate(k, e.what()));
        }
      }
      break;
    }
    case Variant::Ncwe: {
      const SymmetricEigen eig = sym_eigen(dm.zeta);
      for (int k : cfg.outlier_indices.empty() ? defaults : cfg.outlier_indices) {
        try {
          records.push_back(prediction_record(outlier_ncwe(eig, k, s, kappa), "ncwe_general"));
        } catch (const DegenerateEigenvalue& e) {
          records.push_back(degenerate(k, e.what()));
        }
      }
      break;
    }
    case Variant::Nccwe: {
      std::optional<std::pair<SymmetricEigen, Matrix>> basis;
      try {
        basis = common_eigenbasis(spec.xi, dm.zeta);
      } catch (const NonCommuting&) {
        records.push_back({{"status", "no analytic prediction"},
                           {"reason", "xi and zeta do not commute; separated eigenvalues have no closed form"}});
        break;
      }
      std::vector<int> ks = cfg.outlier_indices;
      if (ks.empty()) {
        // Largest combined spike sigma2 x_k + z_k.
        const Vector combined = s * basis->first.eigenvalues + basis->second.diagonal();
        Eigen::Index top = 0;
        combined.maxCoeff(&top);
        ks.push_back(static_cast<int>(top) + 1);
      }
      for (int k : ks) {
        try {
          records.push_back(
              prediction_record(outlier_nccwe(basis->first, basis->second, k, s, kappa), "nccwe_commuting"));
        } catch (const DegenerateEigenvalue& e) {
          records.push_back(degenerate(k, e.what()));
        }
      }
      break;
    }
  }
  return records;
}

int cmd_density(const RunConfig& cfg, const fs::path& out_dir) {
  const DensityCurve curve = theory_curve(cfg);
  write_file(out_dir / "density.csv", curve_csv(curve));
  Json side = {{"config", config_to_json(cfg)},
               {"spec_digest", spec_digest(cfg.ensemble.spec)},
               {"variant", to_string(cfg.resolved)},
               {"epsilon", curve.epsilon},
               {"stats", curve_stats(curve, cfg.ensemble.spec.n)},
               {"warnings", curve.warnings},
               {"metadata", metadata("density")}};
  write_json(out_dir / "density.json", side);
  if (too_many_failures(curve)) {
    std::cerr << "error: solver failed at " << curve.failures() << " of " << curve.grid.size() << " grid points\n";
    return kSolverFailure;
  }
  return kOk;
}

int cmd_mc(const RunConfig& cfg, const fs::path& out_dir) {
  const McConfig mcc = mc_config(cfg);
  const EnsembleSpec& spec = sampled_spec(cfg);
  const McSpectrum mc = sample_wishart(spec, mcc);

  std::string eig = "trial,index,lambda\n";
  const auto n = static_cast<std::size_t>(mc.n);
  for (std::size_t i = 0; i < mc.eigenvalues.size(); ++i) {
    eig += std::to_string(i / n) + "," + std::to_string(i % n) + "," + num(mc.eigenvalues[i]) + "\n";
  }
  write_file(out_dir / "eigenvalues.csv", eig);
  write_file(out_dir / "histogram.csv", histogram_csv(mc.histogram));
  Json summary = mc_summary(mc, mcc);
  summary["config"] = config_to_json(cfg);
  summary["spec_digest"] = spec_digest(spec);
  summary["metadata"] = metadata("mc");
  write_json(out_dir / "mc_summary.json", summary);
  return kOk;
}

int cmd_outliers(const RunConfig& cfg, const fs::path& out_dir) {
  Json doc = {{"config", config_to_json(cfg)},
              {"spec_digest", spec_digest(cfg.ensemble.spec)},
              {"variant", to_string(cfg.resolved)},
              {"predictions", outlier_records(cfg)},
              {"metadata", metadata("outliers")}};
  write_json(out_dir / "outliers.json", doc);
  return kOk;
}

int cmd_compare(const RunConfig& cfg, const fs::path& out_dir) {
  const int n = cfg.ensemble.spec.n;
  const DensityCurve theory = theory_curve(cfg);
  write_file(out_dir / "theory.csv", curve_csv(theory));
  if (too_many_failures(theory)) {
    std::cerr << "error: solver failed at " << theory.failures() << " of " << theory.grid.size()
              << " grid points\n";
    return kSolverFailure;
  }

  const Json records = outlier_records(cfg);
  const McConfig mcc = mc_config(cfg);
  const McSpectrum mc = sample_wishart(sampled_spec(cfg), mcc, bulk_upper_edge(theory, n));
  write_file(out_dir / "histogram.csv", histogram_csv(mc.histogram));

  Thresholds th = cfg.thresholds;
  if (!th.sup && !th.kolmogorov && !th.outlier_relative) th.sup = 0.05;
  const ComparisonReport report = compare_curves(theory, mc, valid_predictions(records), th.sup.value_or(0.05));

  Json checks = Json::array();
  bool pass = true;
  auto check = [&](const std::string& name, double value, std::optional<double> limit) {
    if (!limit) return;
    const bool ok = value < *limit;
    pass = pass && ok;
    checks.push_back({{"name", name}, {"value", value}, {"threshold", *limit}, {"pass", ok}});
  };
  check("sup_distance", report.sup_distance, th.sup);
  check("kolmogorov", report.kolmogorov, th.kolmogorov);
  Json table = Json::array();
  for (const auto& o : report.outliers) {
    table.push_back({{"rank", o.rank},
                     {"predicted", o.predicted},
                     {"empirical_mean", o.empirical_mean},
                     {"relative_error", o.relative_error}});
    check("outlier_rank_" + std::to_string(o.rank), o.relative_error, th.outlier_relative);
  }

  Json doc = {{"config", config_to_json(cfg)},
              {"spec_digest", spec_digest(cfg.ensemble.spec)},
              {"mc_spec_digest", spec_digest(sampled_spec(cfg))},
              {"variant", to_string(cfg.resolved)},
              {"theory", curve_stats(theory, n)},
              {"mc", mc_summary(mc, mcc)},
              {"sup_distance", report.sup_distance},
              {"sup_distance_center", report.sup_distance_center},
              {"kolmogorov", report.kolmogorov},
              {"bins_compared", report.bins_compared},
              {"predictions", records},
              {"outliers", table},
              {"checks", checks},
              {"pass", pass},
              {"warnings", theory.warnings},
              {"metadata", metadata("compare")}};
  write_json(out_dir / "compare.json", doc);
  return pass ? kOk : kThresholdFailed;
}

int run(int argc, char** argv) {
  CLI::App app{"Spectral densities and separated eigenvalues of non-central correlated Wishart ensembles"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;

  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const RunConfig&, const fs::path&);
  };
  const Sub subs[] = {{"density", "Limiting spectral density on a grid", cmd_density},
                      {"mc", "Monte-Carlo eigenvalue sampling", cmd_mc},
                      {"outliers", "Predicted separated eigenvalues", cmd_outliers},
                      {"compare", "Theory against Monte-Carlo with thresholds", cmd_compare}};
  std::vector<CLI::App*> apps;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", config_path, "JSON configuration file")->required();
    sub->add_option("--seed", seed, "Override the Monte-Carlo seed");
    sub->add_option("--out-dir", out_dir, "Directory for output files");
    apps.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  RunConfig cfg;
  try {
    cfg = load_config(config_path);
    if (seed) {
      McConfig mc = cfg.mc.value_or(McConfig{});
      mc.seed = *seed;
      cfg.mc = mc;
    }
    fs::create_directories(out_dir);
  } catch (const NoConvergence& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kSolverFailure;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  for (std::size_t i = 0; i < apps.size(); ++i) {
    if (!apps[i]->parsed()) continue;
    try {
      return subs[i].fn(cfg, out_dir);
    } catch (const NoConvergence& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kSolverFailure;
    } catch (const EmptyOverlap& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kThresholdFailed;
    }
  }
  return kConfigError;
}

}  // namespace ncw::cli
