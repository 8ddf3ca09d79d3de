#include "iuq/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "iuq/common.hpp"

namespace iuq::io {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool is_output_column(const std::string& name) {
  const std::string n = lower(name);
  return n.rfind("y", 0) == 0 || n.rfind("void", 0) == 0;
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(trim(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

double parse_double(const std::string& cell, const std::string& context) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw DataError(context + ": non-numeric cell '" + cell + "'");
  }
}

std::vector<int> TestTable::retained_rows() const {
  std::vector<int> rows;
  for (std::size_t i = 0; i < tests.size(); ++i)
    if (!tests[i].excluded) rows.push_back(static_cast<int>(i));
  return rows;
}

std::vector<int> TestTable::retained_ids() const {
  std::vector<int> ids;
  for (const auto& t : tests)
    if (!t.excluded) ids.push_back(t.test_id);
  return ids;
}

Eigen::MatrixXd TestTable::retained_x() const {
  const auto rows = retained_rows();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), r());
  for (std::size_t i = 0; i < rows.size(); ++i)
    X.row(static_cast<Eigen::Index>(i)) = tests[static_cast<std::size_t>(rows[i])].x.transpose();
  return X;
}

Eigen::MatrixXd TestTable::retained_y() const {
  const auto rows = retained_rows();
  Eigen::MatrixXd Y(static_cast<Eigen::Index>(rows.size()), m());
  for (std::size_t i = 0; i < rows.size(); ++i)
    Y.row(static_cast<Eigen::Index>(i)) = tests[static_cast<std::size_t>(rows[i])].y_meas.transpose();
  return Y;
}

const TestCase& TestTable::by_id(int test_id) const {
  for (const auto& t : tests)
    if (t.test_id == test_id) return t;
  throw DataError("unknown test id " + std::to_string(test_id));
}

TestTable load_tests(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || lower(header[0]) != "test_id")
    throw DataError(path + ": header must start with test_id");

  TestTable table;
  bool seen_output = false;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (is_output_column(header[c])) {
      seen_output = true;
      table.y_names.push_back(header[c]);
    } else {
      if (seen_output)
        throw DataError(path + ": input column '" + header[c] +
                        "' appears after output columns");
      table.x_names.push_back(header[c]);
    }
  }
  if (table.x_names.empty() || table.y_names.empty())
    throw DataError(path + ": need at least one input and one output column");

  std::set<int> seen_ids;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    const std::string ctx = path + ":" + std::to_string(lineno);
    if (cells.size() != header.size())
      throw DataError(ctx + ": expected " + std::to_string(header.size()) +
                      " cells, found " + std::to_string(cells.size()));
    TestCase t;
    t.test_id = static_cast<int>(parse_double(cells[0], ctx));
    if (!seen_ids.insert(t.test_id).second)
      throw DataError(ctx + ": duplicate test_id " + std::to_string(t.test_id));
    t.x.resize(table.r());
    t.y_meas.resize(table.m());
    for (int k = 0; k < table.r(); ++k)
      t.x(k) = parse_double(cells[static_cast<std::size_t>(1 + k)], ctx);
    for (int q = 0; q < table.m(); ++q)
      t.y_meas(q) = parse_double(
          cells[static_cast<std::size_t>(1 + table.r() + q)], ctx);
    if (!t.x.allFinite() || !t.y_meas.allFinite())
      throw DataError(ctx + ": non-finite value");
    t.corrected.assign(static_cast<std::size_t>(table.m()), false);
    table.tests.push_back(std::move(t));
  }
  if (table.tests.empty()) throw DataError(path + ": no data rows");
  return table;
}

void write_tests(const std::string& path, const TestTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.precision(17);
  out << "test_id";
  for (const auto& n : table.x_names) out << "," << n;
  for (const auto& n : table.y_names) out << "," << n;
  out << "\n";
  for (const auto& t : table.tests) {
    out << t.test_id;
    for (Eigen::Index k = 0; k < t.x.size(); ++k) out << "," << t.x(k);
    for (Eigen::Index q = 0; q < t.y_meas.size(); ++q) out << "," << t.y_meas(q);
    out << "\n";
  }
}

double correct_void_fraction(double alpha_measured, bool* corrected) {
  if (alpha_measured < 20.0 || alpha_measured > 90.0) {
    if (corrected) *corrected = false;
    return alpha_measured;
  }
  if (corrected) *corrected = true;
  return alpha_measured / (1.167 - 0.001 * alpha_measured);
}

void apply_densitometer_correction(TestTable& table,
                                   const std::vector<int>& qoi_indices) {
  for (auto& t : table.tests) {
    for (int q : qoi_indices) {
      if (q < 0 || q >= table.m())
        throw ConfigError("correction QoI index " + std::to_string(q) +
                          " out of range");
      bool flag = false;
      t.y_meas(q) = correct_void_fraction(t.y_meas(q), &flag);
      t.corrected[static_cast<std::size_t>(q)] = flag;
    }
  }
}

void filter_tests(TestTable& table, const std::vector<int>& elevation_order,
                  const Eigen::MatrixXd* residuals,
                  const FilterOptions& opts) {
  if (static_cast<int>(elevation_order.size()) != table.m())
    throw ConfigError("filter_tests: elevation order must list every QoI");

  // Rule 1: non-physical elevation ordering (applies per test).
  for (auto& t : table.tests) {
    if (t.excluded) continue;
    for (std::size_t e = 0; e + 1 < elevation_order.size(); ++e) {
      const int lo = elevation_order[e];
      const int hi = elevation_order[e + 1];
      if (t.y_meas(lo) > t.y_meas(hi) + opts.ordering_tol) {
        t.excluded = true;
        t.exclusion_reason = "non-physical ordering (" +
                             table.y_names[static_cast<std::size_t>(lo)] +
                             " > " +
                             table.y_names[static_cast<std::size_t>(hi)] + ")";
        break;
      }
    }
  }

  // Rule 2: gross outliers relative to the nominal-parameter residuals. The
  // robust scale is computed over all ordering-retained tests, so applying
  // the filter twice flags the same set.
  if (residuals == nullptr) return;
  std::vector<int> rows;
  for (std::size_t i = 0; i < table.tests.size(); ++i)
    if (!table.tests[i].excluded ||
        table.tests[i].exclusion_reason.rfind("outlier", 0) == 0)
      rows.push_back(static_cast<int>(i));
  if (static_cast<Eigen::Index>(rows.size()) != residuals->rows())
    throw DataError("filter_tests: residual rows do not match retained tests");

  auto median_of = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };

  for (int q = 0; q < table.m(); ++q) {
    std::vector<double> col;
    for (std::size_t i = 0; i < rows.size(); ++i)
      col.push_back((*residuals)(static_cast<Eigen::Index>(i), q));
    const double med = median_of(col);
    std::vector<double> dev;
    for (double v : col) dev.push_back(std::abs(v - med));
    const double mad = median_of(dev);
    const double scale = 1.4826 * mad;
    if (!(scale > 0.0)) continue;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto& t = table.tests[static_cast<std::size_t>(rows[i])];
      if (t.excluded) continue;
      if (std::abs(col[i] - med) > opts.outlier_k * scale) {
        t.excluded = true;
        t.exclusion_reason =
            "outlier residual in " + table.y_names[static_cast<std::size_t>(q)];
      }
    }
  }
}

Eigen::VectorXd build_sigma_exp(const Eigen::VectorXd& y_stacked,
                                const MeasErrorConfig& config, int m) {
  if (!(config.rel > 0.0))
    throw ConfigError("build_sigma_exp: rel_meas_error must be positive");
  if (m < 1 || y_stacked.size() % m != 0)
    throw DataError("build_sigma_exp: stacked length not divisible by m");
  if (!config.per_qoi_rel.empty() &&
      static_cast<int>(config.per_qoi_rel.size()) != m)
    throw ConfigError("build_sigma_exp: per-QoI override must list every QoI");

  Eigen::VectorXd var(y_stacked.size());
  for (Eigen::Index i = 0; i < y_stacked.size(); ++i) {
    const int q = static_cast<int>(i % m);
    const double rel = config.per_qoi_rel.empty()
                           ? config.rel
                           : config.per_qoi_rel[static_cast<std::size_t>(q)];
    double sd;
    if (config.mode == ErrorMode::Relative)
      sd = std::max(rel * std::abs(y_stacked(i)), config.std_floor);
    else
      sd = rel;  // constant, in void-%
    var(i) = sd * sd;
  }
  return var;
}

BiasMode bias_mode_from_string(const std::string& name) {
  const std::string n = lower(name);
  if (n == "withbias") return BiasMode::WithBias;
  if (n == "nobias") return BiasMode::NoBias;
  throw ConfigError("unknown mode '" + name + "' (expected withbias|nobias)");
}

std::string to_string(BiasMode mode) {
  return mode == BiasMode::WithBias ? "withbias" : "nobias";
}

void RunConfig::validate() const {
  if (!(0.0 < beta && beta < alpha && alpha < 1.0))
    throw ConfigError("config: need 0 < beta < alpha < 1");
  if (!(meas.rel > 0.0)) throw ConfigError("config: rel_meas_error must be > 0");
  if (mcmc.n_samples <= mcmc.burn_in)
    throw ConfigError("config: mcmc n_samples must exceed burn_in");
  if (mcmc.thin < 1) throw ConfigError("config: mcmc thin must be >= 1");
  if (n_design < 2) throw ConfigError("config: n_design must be >= 2");
  if (!(holdout_fraction > 0.0))
    throw ConfigError("config: holdout_fraction must be > 0");
  if (simulator != "toy" && simulator != "table")
    throw ConfigError("config: simulator must be toy or table");
  if (simulator == "table" && table_path.empty())
    throw ConfigError("config: simulator=table requires table_path");
  const std::size_t p = prior.lower.size();
  if (p == 0) throw ConfigError("config: prior table is empty");
  if (prior.upper.size() != p || prior.nominal.size() != p ||
      prior.names.size() != p)
    throw ConfigError("config: prior table columns have unequal lengths");
  for (std::size_t i = 0; i < p; ++i) {
    if (!(prior.lower[i] < prior.upper[i]))
      throw ConfigError("config: prior lower must be < upper for " +
                        prior.names[i]);
    if (prior.nominal[i] <= prior.lower[i] || prior.nominal[i] >= prior.upper[i])
      throw ConfigError("config: nominal outside prior bounds for " +
                        prior.names[i]);
  }
}

namespace {

struct IniData {
  // section -> key -> value (last assignment wins)
  std::map<std::string, std::map<std::string, std::string>> values;
  std::set<std::string> consumed;

  std::optional<std::string> get(const std::string& section,
                                 const std::string& key) {
    auto s = values.find(section);
    if (s == values.end()) return std::nullopt;
    auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    consumed.insert(section + "." + key);
    return k->second;
  }
};

IniData parse_ini(const std::string& text, const std::string& origin) {
  IniData ini;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": malformed section header");
      section = lower(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected key = value");
    const std::string key = lower(trim(line.substr(0, eq)));
    const std::string value = trim(line.substr(eq + 1));
    ini.values[section][key] = value;
  }
  return ini;
}

std::vector<double> parse_double_list(const std::string& text,
                                      const std::string& what) {
  std::vector<double> out;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, ','))
    out.push_back(parse_double(trim(cur), what));
  return out;
}

double to_double(const std::string& v, const std::string& what) {
  try {
    return parse_double(v, what);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
}

long to_long(const std::string& v, const std::string& what) {
  const double d = to_double(v, what);
  if (d != std::floor(d))
    throw ConfigError(what + ": expected an integer, got '" + v + "'");
  return static_cast<long>(d);
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& origin) {
  IniData ini = parse_ini(text, origin);
  RunConfig cfg;

  if (auto v = ini.get("tsa", "alpha")) cfg.alpha = to_double(*v, "tsa.alpha");
  if (auto v = ini.get("tsa", "beta")) cfg.beta = to_double(*v, "tsa.beta");
  if (auto v = ini.get("tsa", "measure")) cfg.measure = tsa::measure_from_string(*v);

  if (auto v = ini.get("emulator", "n_design"))
    cfg.n_design = static_cast<int>(to_long(*v, "emulator.n_design"));
  if (auto v = ini.get("emulator", "q2_threshold"))
    cfg.q2_threshold = to_double(*v, "emulator.q2_threshold");
  if (auto v = ini.get("emulator", "holdout_fraction"))
    cfg.holdout_fraction = to_double(*v, "emulator.holdout_fraction");
  if (auto v = ini.get("emulator", "gp_starts"))
    cfg.gp.n_starts = static_cast<int>(to_long(*v, "emulator.gp_starts"));
  if (auto v = ini.get("emulator", "gp_max_iters"))
    cfg.gp.max_iters = static_cast<int>(to_long(*v, "emulator.gp_max_iters"));
  if (auto v = ini.get("emulator", "gp_nugget_rel"))
    cfg.gp.nugget_rel = to_double(*v, "emulator.gp_nugget_rel");

  if (auto v = ini.get("mcmc", "n_samples"))
    cfg.mcmc.n_samples = static_cast<int>(to_long(*v, "mcmc.n_samples"));
  if (auto v = ini.get("mcmc", "burn_in"))
    cfg.mcmc.burn_in = static_cast<int>(to_long(*v, "mcmc.burn_in"));
  if (auto v = ini.get("mcmc", "thin"))
    cfg.mcmc.thin = static_cast<int>(to_long(*v, "mcmc.thin"));
  if (auto v = ini.get("mcmc", "seed"))
    cfg.mcmc.seed = static_cast<std::uint64_t>(to_long(*v, "mcmc.seed"));
  if (auto v = ini.get("mcmc", "mode")) cfg.mode = bias_mode_from_string(*v);

  if (auto v = ini.get("measurement", "rel_error"))
    cfg.meas.rel = to_double(*v, "measurement.rel_error");
  if (auto v = ini.get("measurement", "error_mode")) {
    const std::string mode = lower(*v);
    if (mode == "relative")
      cfg.meas.mode = ErrorMode::Relative;
    else if (mode == "absolute_points")
      cfg.meas.mode = ErrorMode::AbsolutePoints;
    else
      throw ConfigError("measurement.error_mode: expected relative|absolute_points");
  }
  if (auto v = ini.get("measurement", "std_floor"))
    cfg.meas.std_floor = to_double(*v, "measurement.std_floor");
  if (auto v = ini.get("measurement", "per_qoi_rel_error"))
    cfg.meas.per_qoi_rel = parse_double_list(*v, "measurement.per_qoi_rel_error");

  if (auto v = ini.get("data", "simulator")) cfg.simulator = lower(*v);
  if (auto v = ini.get("data", "table_path")) cfg.table_path = *v;
  if (auto v = ini.get("data", "tests_path")) cfg.tests_path = *v;
  if (auto v = ini.get("data", "densitometer_correction"))
    cfg.densitometer_correction = (lower(*v) == "true" || *v == "1");

  if (auto v = ini.get("toy", "n_tests"))
    cfg.toy.n_tests = static_cast<int>(to_long(*v, "toy.n_tests"));
  if (auto v = ini.get("toy", "noise_rel"))
    cfg.toy.noise_rel = to_double(*v, "toy.noise_rel");
  if (auto v = ini.get("toy", "bias_amplitude"))
    cfg.toy.bias_amplitude = to_double(*v, "toy.bias_amplitude");
  if (auto v = ini.get("toy", "seed"))
    cfg.toy.seed = static_cast<std::uint64_t>(to_long(*v, "toy.seed"));
  if (auto v = ini.get("toy", "theta_true"))
    cfg.toy.theta_true = parse_double_list(*v, "toy.theta_true");

  // Prior: scalar or comma-list forms; a missing table defaults to the toy
  // model's five parameters on (0, 5) with nominal 1.
  std::size_t count = 5;
  if (auto v = ini.get("prior", "count"))
    count = static_cast<std::size_t>(to_long(*v, "prior.count"));
  std::vector<double> lo(count, 0.0), hi(count, 5.0), nom(count, 1.0);
  auto fill = [&](const char* key, std::vector<double>& dst) {
    if (auto v = ini.get("prior", key)) {
      auto vals = parse_double_list(*v, std::string("prior.") + key);
      if (vals.size() == 1)
        std::fill(dst.begin(), dst.end(), vals[0]);
      else if (vals.size() == count)
        dst = vals;
      else
        throw ConfigError(std::string("prior.") + key + ": expected 1 or " +
                          std::to_string(count) + " values");
    }
  };
  fill("lower", lo);
  fill("upper", hi);
  fill("nominal", nom);
  cfg.prior.lower = lo;
  cfg.prior.upper = hi;
  cfg.prior.nominal = nom;
  if (auto v = ini.get("prior", "names")) {
    std::istringstream in(*v);
    std::string cur;
    while (std::getline(in, cur, ',')) cfg.prior.names.push_back(trim(cur));
    if (cfg.prior.names.size() != count)
      throw ConfigError("prior.names: expected " + std::to_string(count) +
                        " names");
  } else {
    for (std::size_t i = 0; i < count; ++i)
      cfg.prior.names.push_back("theta" + std::to_string(i + 1));
  }

  if (auto v = ini.get("run", "threads"))
    cfg.threads = static_cast<unsigned>(to_long(*v, "run.threads"));

  // Reject unknown keys so misspelled settings do not silently fall back to
  // defaults.
  for (const auto& [section, kv] : ini.values)
    for (const auto& [key, value] : kv) {
      (void)value;
      if (!ini.consumed.count(section + "." + key))
        throw ConfigError(origin + ": unknown setting [" + section + "] " + key);
    }

  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

std::string config_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << h;
  return out.str();
}

}  // namespace iuq::io
