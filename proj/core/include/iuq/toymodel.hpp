#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <utility>
#include <vector>

#include "iuq/dataio.hpp"

namespace iuq::toy {

inline constexpr int kDesignDim = 4;  // pressure, mass flow, power, inlet temp
inline constexpr int kParamDim = 5;
inline constexpr int kQoiCount = 4;   // void fractions, bottom to top

/// Ground-truth description of a synthetic experiment campaign.
struct ToySpec {
  Eigen::VectorXd theta_true;     // p-vector inside the prior box
  double bias_amplitude = 0.0;    // 0 disables the injected model discrepancy
  double noise_rel = 0.02;        // measurement noise, relative
};

ToySpec default_spec();

const std::vector<std::string>& design_var_names();
const std::vector<std::string>& qoi_names();
std::vector<std::pair<double, double>> design_box();

/// Default uniform prior: (0, 5) per parameter, nominal 1.
io::PriorTable default_prior();

/// Smooth two-phase-flow-flavored response: four void fractions in [0, 100),
/// monotone in elevation, each depending nonlinearly on the calibration
/// parameters and on every design variable. Deterministic.
Eigen::VectorXd simulate(const Eigen::VectorXd& x, const Eigen::VectorXd& theta);

/// Injected model discrepancy, a low-order polynomial of the normalized
/// design variables only (never theta), scaled to a few void-%.
Eigen::VectorXd bias_term(const Eigen::VectorXd& x);

/// Synthetic test campaign: maximin-LHS design points over the design box,
/// measurements simulate(x, theta_true) + bias_amplitude * b(x) + noise
/// with per-observation std = noise_rel * |y|.
io::TestTable generate_experiments(const ToySpec& spec, int n_tests,
                                   std::uint64_t seed);

}  // namespace iuq::toy
