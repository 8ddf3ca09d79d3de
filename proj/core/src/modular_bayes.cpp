#include "iuq/modular_bayes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "iuq/common.hpp"
#include "iuq/convex_hull.hpp"
#include "iuq/doe.hpp"

namespace iuq::bayes {

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

void PriorSpec::validate() const {
  const int p = size();
  if (p == 0) throw ConfigError("prior: empty");
  if (upper.size() != p || nominal.size() != p ||
      static_cast<int>(names.size()) != p)
    throw ConfigError("prior: inconsistent column lengths");
  for (int i = 0; i < p; ++i) {
    if (!(lower(i) < upper(i)))
      throw ConfigError("prior: lower >= upper for " + names[static_cast<std::size_t>(i)]);
    if (nominal(i) <= lower(i) || nominal(i) >= upper(i))
      throw ConfigError("prior: nominal outside bounds for " +
                        names[static_cast<std::size_t>(i)]);
  }
}

PriorSpec PriorSpec::from_table(const io::PriorTable& table) {
  PriorSpec spec;
  spec.names = table.names;
  const auto n = static_cast<Eigen::Index>(table.lower.size());
  spec.lower = Eigen::Map<const Eigen::VectorXd>(table.lower.data(), n);
  spec.upper = Eigen::Map<const Eigen::VectorXd>(table.upper.data(), n);
  spec.nominal = Eigen::Map<const Eigen::VectorXd>(table.nominal.data(), n);
  spec.validate();
  return spec;
}

Eigen::MatrixXd compute_residuals(const io::TestTable& table,
                                  const sim::Simulator& simulator,
                                  const Eigen::VectorXd& theta0) {
  const auto rows = table.retained_rows();
  const int m = table.m();
  Eigen::MatrixXd residuals(static_cast<Eigen::Index>(rows.size()), m);
  parallel_for(rows.size(), [&](std::size_t i) {
    const auto& t = table.tests[static_cast<std::size_t>(rows[i])];
    Eigen::VectorXd ym;
    try {
      ym = simulator(t.x, theta0);
    } catch (const std::exception& e) {
      throw DataError("simulator failed at test " + std::to_string(t.test_id) +
                      ": " + e.what());
    }
    if (ym.size() != m)
      throw DataError("simulator returned " + std::to_string(ym.size()) +
                      " outputs at test " + std::to_string(t.test_id) +
                      ", expected " + std::to_string(m));
    residuals.row(static_cast<Eigen::Index>(i)) = (t.y_meas - ym).transpose();
  });
  return residuals;
}

BiasModel train_gpbias(const Eigen::MatrixXd& x_val,
                       const Eigen::MatrixXd& residuals,
                       const gp::GpConfig& config, std::uint64_t seed) {
  if (x_val.rows() != residuals.rows())
    throw DataError("train_gpbias: row mismatch between inputs and residuals");
  if (x_val.rows() < x_val.cols() + 2)
    throw DataError("train_gpbias: need at least r+2 validation tests");
  BiasModel bias;
  const int m = static_cast<int>(residuals.cols());
  bias.qoi_models.reserve(static_cast<std::size_t>(m));
  for (int q = 0; q < m; ++q)
    bias.qoi_models.push_back(
        gp::fit(x_val, residuals.col(q), config, derive_seed(seed, static_cast<std::uint64_t>(q))));
  return bias;
}

void evaluate_bias(const BiasModel& bias, const Eigen::MatrixXd& x_iuq,
                   Eigen::MatrixXd& delta, Eigen::VectorXd& sigma_bias) {
  if (bias.qoi_models.empty()) throw DataError("evaluate_bias: empty model");
  const int m = bias.qoi_count();
  const Eigen::Index n = x_iuq.rows();

  // Extrapolation check against the hull of the training (validation) tests.
  const auto& ref = bias.qoi_models[0];
  const Eigen::MatrixXd train_u = ref.train_u;
  const Eigen::MatrixXd query_u = ref.normalize_inputs(x_iuq);
  if (train_u.cols() >= 1) {
    tsa::IncrementalHull hull(static_cast<int>(train_u.cols()));
    for (Eigen::Index i = 0; i < train_u.rows(); ++i)
      hull.add_point(train_u.row(i).transpose());
    if (hull.initialized()) {
      int outside = 0;
      for (Eigen::Index i = 0; i < query_u.rows(); ++i)
        if (!hull.contains(query_u.row(i).transpose(), 1e-9)) ++outside;
      if (outside > 0)
        log_warn("evaluate_bias: " + std::to_string(outside) +
                 " inverse-UQ test(s) outside the validation hull; the "
                 "discrepancy emulator is extrapolating");
    }
  }

  delta.resize(n, m);
  sigma_bias.resize(n * m);
  for (int q = 0; q < m; ++q) {
    Eigen::VectorXd mean, mse;
    gp::predict(bias.qoi_models[static_cast<std::size_t>(q)], x_iuq, mean, mse);
    delta.col(q) = mean;
    for (Eigen::Index i = 0; i < n; ++i) sigma_bias(i * m + q) = mse(i);
  }
}

CodeDesign build_code_design(const std::vector<int>& iuq_ids,
                             const Eigen::MatrixXd& x_iuq,
                             const PriorSpec& prior, int n_design,
                             std::uint64_t seed) {
  if (n_design < 2) throw ConfigError("build_code_design: n_design must be >= 2");
  if (static_cast<Eigen::Index>(iuq_ids.size()) != x_iuq.rows())
    throw DataError("build_code_design: id/row mismatch");
  prior.validate();

  CodeDesign design;
  design.r = static_cast<int>(x_iuq.cols());
  design.p = prior.size();
  design.n_design = n_design;
  const Eigen::Index n = x_iuq.rows();
  design.inputs.resize(n * n_design, design.r + design.p);

  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::MatrixXd unit = doe::maximin_lhs(
        n_design, design.p, derive_seed(seed, static_cast<std::uint64_t>(i)));
    for (int s = 0; s < n_design; ++s) {
      const Eigen::Index row = i * n_design + s;
      design.inputs.block(row, 0, 1, design.r) = x_iuq.row(i);
      for (int k = 0; k < design.p; ++k)
        design.inputs(row, design.r + k) =
            prior.lower(k) + unit(s, k) * (prior.upper(k) - prior.lower(k));
      design.row_test_ids.push_back(iuq_ids[static_cast<std::size_t>(i)]);
    }
  }
  return design;
}

CodeDesign build_holdout_design(const std::vector<int>& iuq_ids,
                                const Eigen::MatrixXd& x_iuq,
                                const PriorSpec& prior, int n_design,
                                double holdout_fraction, std::uint64_t seed) {
  const int n_hold = std::max(
      2, static_cast<int>(std::lround(n_design * holdout_fraction)));
  return build_code_design(iuq_ids, x_iuq, prior, n_hold,
                           derive_seed(seed, 0x401dULL));
}

Eigen::MatrixXd evaluate_design(const CodeDesign& design,
                                const sim::Simulator& simulator, int m) {
  const Eigen::Index n = design.inputs.rows();
  Eigen::MatrixXd outputs(n, m);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    const Eigen::VectorXd x = design.inputs.row(row).head(design.r);
    const Eigen::VectorXd theta = design.inputs.row(row).tail(design.p);
    const Eigen::VectorXd y = simulator(x, theta);
    if (y.size() != m)
      throw DataError("simulator returned wrong output count for design row " +
                      std::to_string(i));
    outputs.row(row) = y.transpose();
  });
  return outputs;
}

void CodeEmulator::predict(const Eigen::MatrixXd& X,
                           const Eigen::VectorXd& theta, Eigen::MatrixXd& mean,
                           Eigen::MatrixXd& mse) const {
  if (X.cols() != r)
    throw DataError("CodeEmulator::predict: design-variable dimension mismatch");
  if (theta.size() != p)
    throw DataError("CodeEmulator::predict: parameter dimension mismatch");
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd inputs(n, r + p);
  inputs.leftCols(r) = X;
  inputs.rightCols(p) = theta.transpose().replicate(n, 1);

  const int m = qoi_count();
  mean.resize(n, m);
  mse.resize(n, m);
  for (int q = 0; q < m; ++q) {
    Eigen::VectorXd mu, var;
    gp::predict(qoi_models[static_cast<std::size_t>(q)], inputs, mu, var);
    mean.col(q) = mu;
    mse.col(q) = var;
  }
}

std::string ValidationReport::to_json() const {
  nlohmann::json j;
  j["q2_threshold"] = q2_threshold;
  j["all_passed"] = all_passed;
  j["qoi"] = nlohmann::json::array();
  for (const auto& q : qoi)
    j["qoi"].push_back({{"name", q.name},
                        {"q2", q.q2},
                        {"loocv", q.loocv},
                        {"gate_passed", q.gate_passed}});
  return j.dump(2);
}

CodeTrainResult train_and_validate_gpcode(
    const CodeDesign& design, const Eigen::MatrixXd& outputs,
    const std::vector<std::string>& qoi_names, const sim::Simulator& simulator,
    const std::vector<int>& iuq_ids, const Eigen::MatrixXd& x_iuq,
    const PriorSpec& prior, double holdout_fraction, double q2_threshold,
    const gp::GpConfig& config, std::uint64_t seed) {
  if (outputs.rows() != design.inputs.rows())
    throw DataError("train_and_validate_gpcode: outputs do not cover design");
  const int m = static_cast<int>(outputs.cols());

  CodeTrainResult result;
  result.emulator.r = design.r;
  result.emulator.p = design.p;
  result.emulator.n_design = design.n_design;
  for (int q = 0; q < m; ++q)
    result.emulator.qoi_models.push_back(
        gp::fit(design.inputs, outputs.col(q), config,
                derive_seed(seed, 1000 + static_cast<std::uint64_t>(q))));

  // Fresh holdout with the same per-test structure as the training design.
  const CodeDesign holdout = build_holdout_design(
      iuq_ids, x_iuq, prior, design.n_design, holdout_fraction, seed);
  for (Eigen::Index i = 0; i < holdout.inputs.rows(); ++i)
    for (Eigen::Index j = 0; j < design.inputs.rows(); ++j)
      if ((holdout.inputs.row(i) - design.inputs.row(j)).lpNorm<Eigen::Infinity>() < 1e-12)
        throw DataError(
            "train_and_validate_gpcode: holdout duplicates a training row");
  const Eigen::MatrixXd holdout_y = evaluate_design(holdout, simulator, m);

  result.report.q2_threshold = q2_threshold;
  result.report.all_passed = true;
  for (int q = 0; q < m; ++q) {
    QoiValidation v;
    v.name = q < static_cast<int>(qoi_names.size())
                 ? qoi_names[static_cast<std::size_t>(q)]
                 : "y" + std::to_string(q + 1);
    const auto& model = result.emulator.qoi_models[static_cast<std::size_t>(q)];
    v.q2 = gp::predictivity_q2(model, holdout.inputs, holdout_y.col(q));
    v.loocv = gp::loocv_error(model);
    v.gate_passed = v.q2 >= q2_threshold;
    result.report.all_passed = result.report.all_passed && v.gate_passed;
    result.report.qoi.push_back(std::move(v));
  }
  return result;
}

void write_design_csv(const std::string& path, const CodeDesign& design,
                      const Eigen::MatrixXd& outputs) {
  if (outputs.rows() != design.inputs.rows())
    throw DataError("write_design_csv: outputs do not cover design");
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.precision(17);
  out << "test_id";
  for (int k = 1; k <= design.r; ++k) out << ",x" << k;
  for (int k = 1; k <= design.p; ++k) out << ",theta" << k;
  for (Eigen::Index q = 1; q <= outputs.cols(); ++q) out << ",y" << q;
  out << "\n";
  for (Eigen::Index i = 0; i < design.inputs.rows(); ++i) {
    out << design.row_test_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < design.inputs.cols(); ++k)
      out << "," << design.inputs(i, k);
    for (Eigen::Index q = 0; q < outputs.cols(); ++q) out << "," << outputs(i, q);
    out << "\n";
  }
}

}  // namespace iuq::bayes
