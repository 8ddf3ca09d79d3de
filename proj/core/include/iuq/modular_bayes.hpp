#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "iuq/dataio.hpp"
#include "iuq/gp.hpp"
#include "iuq/simulator.hpp"

namespace iuq::bayes {

/// Uniform prior box with nominal values (the multiplicative-factor
/// convention: nominal 1, range (0, 5) unless configured otherwise).
struct PriorSpec {
  std::vector<std::string> names;
  Eigen::VectorXd lower, upper, nominal;

  int size() const { return static_cast<int>(lower.size()); }
  void validate() const;
  static PriorSpec from_table(const io::PriorTable& table);
};

/// Model-discrepancy emulator: one independent GP per QoI over the design
/// variables, trained on the validation-test residuals at nominal
/// parameters.
struct BiasModel {
  std::vector<gp::GpModel> qoi_models;
  int qoi_count() const { return static_cast<int>(qoi_models.size()); }
};

/// Code emulator: one independent GP per QoI over (x, theta).
struct CodeEmulator {
  std::vector<gp::GpModel> qoi_models;
  int r = 0;  // design-variable dimension
  int p = 0;  // calibration-parameter dimension
  int n_design = 0;

  int qoi_count() const { return static_cast<int>(qoi_models.size()); }

  /// Means and MSEs for every QoI at each design point with theta fixed.
  /// Outputs are n x m.
  void predict(const Eigen::MatrixXd& X, const Eigen::VectorXd& theta,
               Eigen::MatrixXd& mean, Eigen::MatrixXd& mse) const;
};

/// Residuals yE - yM(x, theta0), one row per retained test, one column per
/// QoI. Throws DataError naming the test id when the simulator fails.
Eigen::MatrixXd compute_residuals(const io::TestTable& table,
                                  const sim::Simulator& simulator,
                                  const Eigen::VectorXd& theta0);

BiasModel train_gpbias(const Eigen::MatrixXd& x_val,
                       const Eigen::MatrixXd& residuals,
                       const gp::GpConfig& config, std::uint64_t seed);

/// delta: N_IUQ x m GP means; sigma_bias: the GP MSEs flattened test-major
/// (QoI minor). Warns when a query lies outside the validation hull.
void evaluate_bias(const BiasModel& bias, const Eigen::MatrixXd& x_iuq,
                   Eigen::MatrixXd& delta, Eigen::VectorXd& sigma_bias);

/// Training design for the code emulator: for each inverse-UQ test the
/// design variables stay fixed while n_design maximin-LHS parameter samples
/// span the prior box. Rows are concatenated test-major.
struct CodeDesign {
  Eigen::MatrixXd inputs;     // (N * n_design) x (r + p)
  std::vector<int> row_test_ids;
  int r = 0, p = 0, n_design = 0;

  Eigen::MatrixXd theta_samples() const {
    return inputs.rightCols(p);
  }
};

CodeDesign build_code_design(const std::vector<int>& iuq_ids,
                             const Eigen::MatrixXd& x_iuq,
                             const PriorSpec& prior, int n_design,
                             std::uint64_t seed);

/// The fresh holdout design used by the Q2 gate: same per-test structure,
/// max(2, round(n_design * holdout_fraction)) parameter samples per test,
/// drawn from a seed stream disjoint from the training design's.
CodeDesign build_holdout_design(const std::vector<int>& iuq_ids,
                                const Eigen::MatrixXd& x_iuq,
                                const PriorSpec& prior, int n_design,
                                double holdout_fraction, std::uint64_t seed);

/// Runs the simulator over every design row (parallel across rows).
Eigen::MatrixXd evaluate_design(const CodeDesign& design,
                                const sim::Simulator& simulator, int m);

struct QoiValidation {
  std::string name;
  double q2 = 0.0;
  double loocv = 0.0;
  bool gate_passed = false;
};

struct ValidationReport {
  std::vector<QoiValidation> qoi;
  double q2_threshold = 0.95;
  bool all_passed = false;

  std::string to_json() const;
};

struct CodeTrainResult {
  CodeEmulator emulator;
  ValidationReport report;
};

/// Trains the per-QoI code emulators and validates them: Q2 on a fresh
/// maximin-LHS holdout (simulator-evaluated, disjoint from training) and
/// LOOCV on the training data. A failed gate is reported, not thrown.
CodeTrainResult train_and_validate_gpcode(
    const CodeDesign& design, const Eigen::MatrixXd& outputs,
    const std::vector<std::string>& qoi_names, const sim::Simulator& simulator,
    const std::vector<int>& iuq_ids, const Eigen::MatrixXd& x_iuq,
    const PriorSpec& prior, double holdout_fraction, double q2_threshold,
    const gp::GpConfig& config, std::uint64_t seed);

/// CSV with header `test_id,x1..xr,theta1..thetap,y1..ym` (the tabulated
/// simulator schema).
void write_design_csv(const std::string& path, const CodeDesign& design,
                      const Eigen::MatrixXd& outputs);

}  // namespace iuq::bayes
