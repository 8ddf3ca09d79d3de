#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "iuq/convex_hull.hpp"
#include "iuq/doe.hpp"

namespace iuq::tsa {

enum class Measure { CenteredL2, WraparoundL2 };

Measure measure_from_string(const std::string& name);
std::string to_string(Measure m);

/// Dispatch to the squared centered or wrap-around L2 discrepancy.
double discrepancy(const Eigen::MatrixXd& u, Measure m);

/// Split of the retained tests into inverse-UQ and validation subsets.
/// The two id lists are disjoint and together cover every retained test.
struct TestPartition {
  std::vector<int> iuq_ids;  // in selection order
  std::vector<int> val_ids;
  double alpha = 0.25;
  double beta = 0.05;
  Measure measure = Measure::WraparoundL2;
};

/// Greedy coverage ordering of all tests plus the coverage ratio after each
/// prefix. eta is non-decreasing and ends at exactly 1.
struct CoverageTrace {
  std::vector<int> ordered_ids;
  std::vector<double> eta;
  int seed_count = 0;  // tests seeded from per-dimension extremes
  int init_count = 0;  // shortest prefix reaching full coverage
};

/// Ratio of hull volumes Volume[hull(subset)] / Volume[hull(full)], computed
/// on coordinates normalized to the unit cube of the full set. Returns 0 for
/// a degenerate subset hull; throws DataError when the full hull is
/// degenerate.
double coverage_ratio(const Eigen::MatrixXd& subset_points,
                      const Eigen::MatrixXd& full_points);

/// Orders tests so that every prefix greedily maximizes hull coverage,
/// seeding with the tests attaining each design variable's minimum and
/// maximum. Ties resolve to the lowest test id.
CoverageTrace select_validation_init(const std::vector<int>& ids,
                                     const Eigen::MatrixXd& X);

/// Picks the initial inverse-UQ set: from every start test, a set of size
/// floor(n_test_total * beta) is grown by repeated discrepancy-minimizing
/// additions; the tests appearing most often across all runs are returned,
/// suppressing near-duplicates within dedup_radius (normalized Euclidean).
///
/// rest_unit holds the candidate tests' coordinates normalized to the unit
/// cube of the FULL test set.
std::vector<int> select_iuq_init(const std::vector<int>& rest_ids,
                                 const Eigen::MatrixXd& rest_unit,
                                 int n_test_total, double beta, Measure measure,
                                 double dedup_radius = 0.05);

/// Full sequential test source allocation: validation-init by coverage,
/// inverse-UQ-init by appearance counts, then discrepancy-minimizing
/// additions until |IUQ| = floor(n * alpha). Everything left goes to
/// validation.
TestPartition sequential_tsa(const std::vector<int>& ids,
                             const Eigen::MatrixXd& X, double alpha,
                             double beta, Measure measure);

/// CSV with header `test_id,assignment`, assignment in {IUQ, VAL}.
void write_partition_csv(const std::string& path, const TestPartition& part);
TestPartition read_partition_csv(const std::string& path);

/// CSV with header `prefix_n,eta_c`.
void write_coverage_csv(const std::string& path, const CoverageTrace& trace);

}  // namespace iuq::tsa
