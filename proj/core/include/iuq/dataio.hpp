#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "iuq/gp.hpp"
#include "iuq/tsa.hpp"

namespace iuq::io {

/// One experimental test: design variables x and measured outputs (void
/// fractions in %). Excluded tests never enter TSA or inference.
struct TestCase {
  int test_id = 0;
  Eigen::VectorXd x;
  Eigen::VectorXd y_meas;
  std::vector<bool> corrected;
  bool excluded = false;
  std::string exclusion_reason;
};

struct TestTable {
  std::vector<std::string> x_names;
  std::vector<std::string> y_names;
  std::vector<TestCase> tests;

  int r() const { return static_cast<int>(x_names.size()); }
  int m() const { return static_cast<int>(y_names.size()); }

  std::vector<int> retained_rows() const;
  std::vector<int> retained_ids() const;
  /// Design-variable matrix of the retained tests, row per test.
  Eigen::MatrixXd retained_x() const;
  /// Measured outputs of the retained tests, row per test.
  Eigen::MatrixXd retained_y() const;
  const TestCase& by_id(int test_id) const;
};

/// Reads the CSV schema `test_id,x1..xr,y1..ym`. Column roles come from the
/// header: names starting with 'y' or 'void' are outputs, the rest inputs.
/// Schema errors are reported with row numbers.
TestTable load_tests(const std::string& path);
void write_tests(const std::string& path, const TestTable& table);

/// Densitometer correction for a measured void fraction in percent.
/// Applies only within [20, 90]; other values pass through unchanged.
/// `corrected`, when given, reports whether the correction was applied.
double correct_void_fraction(double alpha_measured, bool* corrected = nullptr);

/// Applies correct_void_fraction to the listed QoI columns of every test.
void apply_densitometer_correction(TestTable& table,
                                   const std::vector<int>& qoi_indices);

struct FilterOptions {
  double ordering_tol = 2.0;  // void-% slack before an inversion is flagged
  double outlier_k = 5.0;     // multiples of the robust residual scale
};

/// Marks non-physical tests (a lower-elevation void exceeding the next
/// higher one by more than ordering_tol) and, when residuals at the nominal
/// parameters are supplied, gross outliers beyond outlier_k times the
/// median-absolute-deviation scale. Slightly negative measurements are
/// retained. Idempotent: the outlier baseline is the ordering-retained set.
void filter_tests(TestTable& table, const std::vector<int>& elevation_order,
                  const Eigen::MatrixXd* residuals = nullptr,
                  const FilterOptions& opts = {});

enum class ErrorMode { Relative, AbsolutePoints };

struct MeasErrorConfig {
  double rel = 0.02;             // 2% relative by default
  ErrorMode mode = ErrorMode::Relative;
  double std_floor = 0.5;        // void-% floor in Relative mode
  std::vector<double> per_qoi_rel;  // optional per-QoI override
};

/// Diagonal measurement variance for a stacked (test-major) observation
/// vector with m QoIs per test. Entries are strictly positive.
Eigen::VectorXd build_sigma_exp(const Eigen::VectorXd& y_stacked,
                                const MeasErrorConfig& config, int m);

struct McmcConfig {
  int n_samples = 50000;
  int burn_in = 10000;
  int thin = 10;
  std::uint64_t seed = 42;
};

enum class BiasMode { WithBias, NoBias };

BiasMode bias_mode_from_string(const std::string& name);
std::string to_string(BiasMode mode);

struct ToyConfig {
  int n_tests = 78;
  double noise_rel = 0.02;
  double bias_amplitude = 0.0;
  std::vector<double> theta_true;  // empty = module default
  std::uint64_t seed = 1;
};

struct PriorTable {
  std::vector<std::string> names;
  std::vector<double> lower, upper, nominal;
};

struct RunConfig {
  double alpha = 0.25;
  double beta = 0.05;
  tsa::Measure measure = tsa::Measure::WraparoundL2;
  int n_design = 20;
  double q2_threshold = 0.95;
  double holdout_fraction = 0.25;
  McmcConfig mcmc;
  MeasErrorConfig meas;
  PriorTable prior;
  BiasMode mode = BiasMode::WithBias;
  std::string simulator = "toy";  // toy | table
  std::string table_path;
  std::string tests_path;  // external test CSV; empty = synthesized corpus
  bool densitometer_correction = false;
  ToyConfig toy;
  gp::GpConfig gp;
  unsigned threads = 0;  // 0 = hardware concurrency

  void validate() const;
};

/// Parses the sectioned `key = value` configuration format. Unknown keys are
/// rejected so typos fail loudly.
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text, const std::string& origin);

/// FNV-1a hash of the file bytes, as fixed-width hex.
std::string config_hash_hex(const std::string& path);

// Low-level CSV helpers shared by the stage artifacts.
std::vector<std::string> split_csv_line(const std::string& line);
double parse_double(const std::string& cell, const std::string& context);

}  // namespace iuq::io
