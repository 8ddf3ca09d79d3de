#include "iuq/tsa.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "iuq/common.hpp"

namespace iuq::tsa {

namespace {

constexpr double kFullCoverageTol = 1e-9;

std::vector<std::pair<double, double>> column_bounds(const Eigen::MatrixXd& X) {
  std::vector<std::pair<double, double>> b;
  b.reserve(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index k = 0; k < X.cols(); ++k)
    b.emplace_back(X.col(k).minCoeff(), X.col(k).maxCoeff());
  return b;
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& X,
                            const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
  return out;
}

}  // namespace

Measure measure_from_string(const std::string& name) {
  if (name == "centered" || name == "CenteredL2") return Measure::CenteredL2;
  if (name == "wraparound" || name == "WraparoundL2")
    return Measure::WraparoundL2;
  throw ConfigError("unknown discrepancy measure '" + name +
                    "' (expected centered|wraparound)");
}

std::string to_string(Measure m) {
  return m == Measure::CenteredL2 ? "centered" : "wraparound";
}

double discrepancy(const Eigen::MatrixXd& u, Measure m) {
  return m == Measure::CenteredL2 ? doe::centered_l2_discrepancy(u)
                                  : doe::wraparound_l2_discrepancy(u);
}

double coverage_ratio(const Eigen::MatrixXd& subset_points,
                      const Eigen::MatrixXd& full_points) {
  const auto bounds = column_bounds(full_points);
  Eigen::MatrixXd full_u;
  try {
    full_u = doe::normalize_to_unit_cube(full_points, bounds);
  } catch (const DataError&) {
    throw DataError("coverage_ratio: full test set is degenerate");
  }
  const auto full = convex_hull_volume(full_u);
  if (full.degenerate || full.volume <= 0.0)
    throw DataError("coverage_ratio: full hull is degenerate");
  const Eigen::MatrixXd sub_u =
      doe::normalize_to_unit_cube(subset_points, bounds);
  const auto sub = convex_hull_volume(sub_u);
  if (sub.degenerate) return 0.0;
  return sub.volume / full.volume;
}

CoverageTrace select_validation_init(const std::vector<int>& ids,
                                     const Eigen::MatrixXd& X) {
  const int n = static_cast<int>(X.rows());
  const int r = static_cast<int>(X.cols());
  if (static_cast<int>(ids.size()) != n)
    throw DataError("select_validation_init: ids/rows mismatch");
  if (n < r + 2)
    throw DataError("select_validation_init: need at least r+2 tests");

  Eigen::MatrixXd U;
  try {
    U = doe::normalize_to_unit_cube(X, column_bounds(X));
  } catch (const DataError&) {
    throw DataError("select_validation_init: degenerate design variable");
  }

  // Seed with the tests attaining each design variable's min and max,
  // deduplicated; ties resolve to the lowest test id.
  std::vector<int> seed_rows;
  auto add_seed = [&](int row) {
    if (std::find(seed_rows.begin(), seed_rows.end(), row) == seed_rows.end())
      seed_rows.push_back(row);
  };
  for (int k = 0; k < r; ++k) {
    int lo_row = 0, hi_row = 0;
    for (int i = 1; i < n; ++i) {
      if (U(i, k) < U(lo_row, k) ||
          (U(i, k) == U(lo_row, k) && ids[i] < ids[lo_row]))
        lo_row = i;
      if (U(i, k) > U(hi_row, k) ||
          (U(i, k) == U(hi_row, k) && ids[i] < ids[hi_row]))
        hi_row = i;
    }
    add_seed(lo_row);
    add_seed(hi_row);
  }

  CoverageTrace trace;
  trace.seed_count = static_cast<int>(seed_rows.size());

  IncrementalHull hull(r);
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  std::vector<double> volumes;
  auto append = [&](int row) {
    hull.add_point(U.row(row).transpose());
    used[static_cast<std::size_t>(row)] = true;
    trace.ordered_ids.push_back(ids[row]);
    volumes.push_back(hull.volume());
  };
  for (int row : seed_rows) append(row);

  while (static_cast<int>(trace.ordered_ids.size()) < n) {
    int best_row = -1;
    double best_gain = -1.0;
    for (int i = 0; i < n; ++i) {
      if (used[static_cast<std::size_t>(i)]) continue;
      const double gain =
          hull.initialized() ? hull.added_volume_if(U.row(i).transpose()) : 0.0;
      if (best_row < 0 || gain > best_gain ||
          (gain == best_gain && ids[i] < ids[best_row])) {
        best_row = i;
        best_gain = gain;
      }
    }
    append(best_row);
  }

  if (!hull.initialized() || hull.volume() <= 0.0)
    throw DataError("select_validation_init: full hull is degenerate");

  const double total = volumes.back();
  trace.eta.resize(volumes.size());
  for (std::size_t i = 0; i < volumes.size(); ++i)
    trace.eta[i] = volumes[i] / total;

  trace.init_count = static_cast<int>(trace.eta.size());
  for (std::size_t i = 0; i < trace.eta.size(); ++i) {
    if (trace.eta[i] >= 1.0 - kFullCoverageTol) {
      trace.init_count = static_cast<int>(i) + 1;
      break;
    }
  }
  return trace;
}

std::vector<int> select_iuq_init(const std::vector<int>& rest_ids,
                                 const Eigen::MatrixXd& rest_unit,
                                 int n_test_total, double beta, Measure measure,
                                 double dedup_radius) {
  const int n_rest = static_cast<int>(rest_unit.rows());
  if (static_cast<int>(rest_ids.size()) != n_rest)
    throw DataError("select_iuq_init: ids/rows mismatch");
  const int n_init = static_cast<int>(std::floor(n_test_total * beta));
  if (n_init < 2)
    throw DataError("select_iuq_init: floor(N_test * beta) = " +
                    std::to_string(n_init) + " but at least 2 are required");
  if (n_rest <= n_init)
    throw DataError("select_iuq_init: candidate pool not larger than the set");

  // From every start test, grow a set of size n_init by repeatedly adding
  // the candidate minimizing the discrepancy, then tally appearances.
  std::vector<long> counts(static_cast<std::size_t>(n_rest), 0);
  for (int start = 0; start < n_rest; ++start) {
    std::vector<int> members = {start};
    while (static_cast<int>(members.size()) < n_init) {
      int best = -1;
      double best_disc = std::numeric_limits<double>::infinity();
      for (int c = 0; c < n_rest; ++c) {
        if (std::find(members.begin(), members.end(), c) != members.end())
          continue;
        auto trial = members;
        trial.push_back(c);
        const double disc = discrepancy(select_rows(rest_unit, trial), measure);
        if (disc < best_disc ||
            (disc == best_disc && best >= 0 && rest_ids[c] < rest_ids[best])) {
          best = c;
          best_disc = disc;
        }
      }
      members.push_back(best);
    }
    for (int m : members) ++counts[static_cast<std::size_t>(m)];
  }

  // Rank by count (ties to the lowest id) and pick the top n_init, skipping
  // near-duplicates of already-selected tests.
  std::vector<int> order(static_cast<std::size_t>(n_rest));
  for (int i = 0; i < n_rest; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (counts[static_cast<std::size_t>(a)] != counts[static_cast<std::size_t>(b)])
      return counts[static_cast<std::size_t>(a)] > counts[static_cast<std::size_t>(b)];
    return rest_ids[a] < rest_ids[b];
  });

  std::vector<int> chosen_rows;
  std::vector<int> skipped;
  for (int row : order) {
    if (static_cast<int>(chosen_rows.size()) == n_init) break;
    bool near = false;
    for (int c : chosen_rows) {
      if ((rest_unit.row(row) - rest_unit.row(c)).norm() < dedup_radius) {
        near = true;
        break;
      }
    }
    if (near)
      skipped.push_back(row);
    else
      chosen_rows.push_back(row);
  }
  // If suppression left the set short, fall back to the best skipped tests.
  for (int row : skipped) {
    if (static_cast<int>(chosen_rows.size()) == n_init) break;
    chosen_rows.push_back(row);
  }

  std::vector<int> out;
  out.reserve(chosen_rows.size());
  for (int row : chosen_rows) out.push_back(rest_ids[row]);
  return out;
}

TestPartition sequential_tsa(const std::vector<int>& ids,
                             const Eigen::MatrixXd& X, double alpha,
                             double beta, Measure measure) {
  const int n = static_cast<int>(X.rows());
  if (static_cast<int>(ids.size()) != n)
    throw DataError("sequential_tsa: ids/rows mismatch");
  if (!(0.0 < beta && beta < alpha && alpha < 1.0))
    throw ConfigError("sequential_tsa: need 0 < beta < alpha < 1");

  const int n_iuq = static_cast<int>(std::floor(n * alpha));
  const int n_init = static_cast<int>(std::floor(n * beta));
  if (n_iuq <= n_init)
    throw ConfigError(
        "sequential_tsa: floor(N*alpha) must exceed floor(N*beta); nothing to "
        "add sequentially");

  const Eigen::MatrixXd U = doe::normalize_to_unit_cube(X, column_bounds(X));
  std::map<int, int> row_of;
  for (int i = 0; i < n; ++i) row_of[ids[i]] = i;

  // Step 1: initial validation set = shortest full-coverage prefix.
  const CoverageTrace trace = select_validation_init(ids, X);
  std::set<int> val_init(trace.ordered_ids.begin(),
                         trace.ordered_ids.begin() + trace.init_count);

  // Step 2: initial inverse-UQ set from the remaining tests.
  std::vector<int> rest_ids;
  std::vector<int> rest_rows;
  for (int i = 0; i < n; ++i) {
    if (val_init.count(ids[i])) continue;
    rest_ids.push_back(ids[i]);
    rest_rows.push_back(i);
  }
  const std::vector<int> iuq_init = select_iuq_init(
      rest_ids, select_rows(U, rest_rows), n, beta, measure);

  // Step 3-4: grow the inverse-UQ set one discrepancy-minimizing test at a
  // time until it holds floor(N*alpha) tests.
  std::vector<int> iuq_rows;
  for (int id : iuq_init) iuq_rows.push_back(row_of.at(id));
  std::set<int> taken(iuq_init.begin(), iuq_init.end());

  std::vector<int> pool;
  for (int id : rest_ids)
    if (!taken.count(id)) pool.push_back(row_of.at(id));

  while (static_cast<int>(iuq_rows.size()) < n_iuq) {
    int best_pos = -1;
    double best_disc = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < pool.size(); ++c) {
      auto trial = iuq_rows;
      trial.push_back(pool[c]);
      const double disc = discrepancy(select_rows(U, trial), measure);
      if (disc < best_disc ||
          (disc == best_disc && best_pos >= 0 &&
           ids[pool[c]] < ids[pool[static_cast<std::size_t>(best_pos)]])) {
        best_pos = static_cast<int>(c);
        best_disc = disc;
      }
    }
    iuq_rows.push_back(pool[static_cast<std::size_t>(best_pos)]);
    pool.erase(pool.begin() + best_pos);
  }

  TestPartition part;
  part.alpha = alpha;
  part.beta = beta;
  part.measure = measure;
  for (int row : iuq_rows) part.iuq_ids.push_back(ids[row]);
  std::set<int> in_iuq(part.iuq_ids.begin(), part.iuq_ids.end());
  for (int i = 0; i < n; ++i)
    if (!in_iuq.count(ids[i])) part.val_ids.push_back(ids[i]);
  return part;
}

void write_partition_csv(const std::string& path, const TestPartition& part) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << "test_id,assignment\n";
  for (int id : part.iuq_ids) out << id << ",IUQ\n";
  for (int id : part.val_ids) out << id << ",VAL\n";
}

TestPartition read_partition_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("test_id,assignment", 0) != 0)
    throw DataError(path + ": expected header 'test_id,assignment'");
  TestPartition part;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw DataError(path + ":" + std::to_string(lineno) + ": missing comma");
    const int id = std::stoi(line.substr(0, comma));
    std::string tag = line.substr(comma + 1);
    if (!tag.empty() && tag.back() == '\r') tag.pop_back();
    if (tag == "IUQ")
      part.iuq_ids.push_back(id);
    else if (tag == "VAL")
      part.val_ids.push_back(id);
    else
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": assignment must be IUQ or VAL");
  }
  return part;
}

void write_coverage_csv(const std::string& path, const CoverageTrace& trace) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.precision(17);
  out << "prefix_n,eta_c\n";
  for (std::size_t i = 0; i < trace.eta.size(); ++i)
    out << (i + 1) << "," << trace.eta[i] << "\n";
}

}  // namespace iuq::tsa
