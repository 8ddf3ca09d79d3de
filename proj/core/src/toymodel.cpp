#include "iuq/toymodel.hpp"

#include <cmath>
#include <random>

#include "iuq/common.hpp"
#include "iuq/doe.hpp"

namespace iuq::toy {

namespace {

const double kElevation[kQoiCount] = {0.25, 0.5, 0.75, 1.0};

Eigen::VectorXd normalize_x(const Eigen::VectorXd& x) {
  const auto box = design_box();
  Eigen::VectorXd u(kDesignDim);
  for (int k = 0; k < kDesignDim; ++k) {
    const auto [lo, hi] = box[static_cast<std::size_t>(k)];
    u(k) = (x(k) - lo) / (hi - lo);
  }
  return u;
}

}  // namespace

ToySpec default_spec() {
  ToySpec spec;
  spec.theta_true.resize(kParamDim);
  spec.theta_true << 1.15, 0.85, 1.25, 0.90, 1.10;
  return spec;
}

const std::vector<std::string>& design_var_names() {
  static const std::vector<std::string> names = {"pressure", "massflow",
                                                 "power", "t_inlet"};
  return names;
}

const std::vector<std::string>& qoi_names() {
  static const std::vector<std::string> names = {"void1", "void2", "void3",
                                                 "void4"};
  return names;
}

std::vector<std::pair<double, double>> design_box() {
  return {{1.0, 8.6}, {300.0, 1600.0}, {0.6, 7.3}, {531.0, 564.0}};
}

io::PriorTable default_prior() {
  io::PriorTable prior;
  for (int k = 1; k <= kParamDim; ++k) {
    prior.names.push_back("theta" + std::to_string(k));
    prior.lower.push_back(0.0);
    prior.upper.push_back(5.0);
    prior.nominal.push_back(1.0);
  }
  return prior;
}

Eigen::VectorXd simulate(const Eigen::VectorXd& x,
                         const Eigen::VectorXd& theta) {
  if (x.size() != kDesignDim)
    throw DataError("toy::simulate: expected " + std::to_string(kDesignDim) +
                    " design variables");
  if (theta.size() != kParamDim)
    throw DataError("toy::simulate: expected " + std::to_string(kParamDim) +
                    " calibration parameters");

  const Eigen::VectorXd u = normalize_x(x);
  const double pres = u(0), flow = u(1), power = u(2), temp = u(3);

  // Boiling/growth/entrainment drives; all positive over the design box.
  const double drive_a = (0.30 + 1.10 * power) / (0.45 + 0.75 * flow);
  const double drive_b = (0.20 + 0.80 * power) * (1.05 - 0.55 * pres);
  const double drive_c = (0.25 + 0.50 * temp) * (0.25 + 0.55 * power);

  // Parameter effects; each enters through its own design-variable profile
  // so the factors stay separable from data.
  const double t1 = std::max(theta(0), 0.0);
  const double t2 = std::max(theta(1), 0.0);
  const double t3 = std::max(theta(2), 0.0);
  const double t4 = std::max(theta(3), 0.0);
  const double t5 = std::max(theta(4), 0.0);
  const double g1 = std::pow(t1, 0.85);
  const double g2 = std::sqrt(t2 * t5);
  const double g3 = std::pow(t3, 1.1);
  const double g4 = std::pow(t4, 0.9) * std::pow(t2, 0.25);
  const double g5 = std::pow(t5, 0.8);

  Eigen::VectorXd y(kQoiCount);
  for (int q = 0; q < kQoiCount; ++q) {
    const double h = kElevation[q];
    const double h2 = h * h, h3 = h2 * h;
    const double exponent =
        drive_a * h * (0.55 * g1 + 0.45 * (0.60 + 0.80 * pres) * g2) +
        drive_b * h2 * (0.60 * g3 + 0.40 * (0.50 + 0.90 * flow) * g4) +
        drive_c * h3 * g5;
    y(q) = 100.0 * (1.0 - std::exp(-exponent));
  }
  return y;
}

Eigen::VectorXd bias_term(const Eigen::VectorXd& x) {
  const Eigen::VectorXd u = normalize_x(x);
  const double shape = 0.8 * (u(0) - 0.5) - 1.0 * (u(1) - 0.5) +
                       1.2 * (u(2) - 0.5) * (u(3) - 0.5);
  const double elev_weight[kQoiCount] = {0.50, 0.75, 1.00, 1.15};
  Eigen::VectorXd b(kQoiCount);
  for (int q = 0; q < kQoiCount; ++q) b(q) = 5.0 * elev_weight[q] * shape;
  return b;
}

io::TestTable generate_experiments(const ToySpec& spec, int n_tests,
                                   std::uint64_t seed) {
  if (n_tests < 10)
    throw ConfigError("toy::generate_experiments: need at least 10 tests");
  if (spec.theta_true.size() != kParamDim)
    throw ConfigError("toy::generate_experiments: theta_true has wrong size");
  if (spec.noise_rel < 0.0)
    throw ConfigError("toy::generate_experiments: negative noise_rel");

  // Restart-selected maximin only: the greedy swap optimizer pushes nearly
  // every point onto the hull boundary, which would starve the sequential
  // test allocation (the full-coverage validation prefix must leave enough
  // interior tests to draw from).
  doe::LhsOptions opts;
  opts.n_restarts = 20;
  opts.swap_improve = false;
  const Eigen::MatrixXd U = doe::maximin_lhs(n_tests, kDesignDim, seed, opts);
  const auto box = design_box();

  std::mt19937_64 noise_rng(seed ^ 0x5eedf00dULL);
  std::normal_distribution<double> gauss(0.0, 1.0);

  io::TestTable table;
  table.x_names = design_var_names();
  table.y_names = qoi_names();
  for (int i = 0; i < n_tests; ++i) {
    io::TestCase t;
    t.test_id = i + 1;
    t.x.resize(kDesignDim);
    for (int k = 0; k < kDesignDim; ++k) {
      const auto [lo, hi] = box[static_cast<std::size_t>(k)];
      t.x(k) = lo + U(i, k) * (hi - lo);
    }
    const Eigen::VectorXd clean = simulate(t.x, spec.theta_true);
    const Eigen::VectorXd bias = bias_term(t.x);
    t.y_meas.resize(kQoiCount);
    for (int q = 0; q < kQoiCount; ++q) {
      const double signal = clean(q) + spec.bias_amplitude * bias(q);
      const double sd = spec.noise_rel * std::abs(clean(q));
      t.y_meas(q) = signal + (sd > 0 ? sd * gauss(noise_rng) : 0.0);
    }
    t.corrected.assign(kQoiCount, false);
    table.tests.push_back(std::move(t));
  }
  return table;
}

}  // namespace iuq::toy
