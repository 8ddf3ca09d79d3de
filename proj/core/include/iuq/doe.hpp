#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <utility>
#include <vector>

namespace iuq::doe {

/// n x d design with the per-dimension (lower, upper) bounds that map it onto
/// the unit hypercube.
struct DesignMatrix {
  Eigen::MatrixXd points;
  std::vector<std::pair<double, double>> bounds;

  Eigen::MatrixXd unit() const;
};

/// Affine map of each column onto [0,1]. Bounds must satisfy lower < upper;
/// points may exceed the bounds by at most 1e-12 (clamped).
Eigen::MatrixXd normalize_to_unit_cube(
    const Eigen::MatrixXd& points,
    const std::vector<std::pair<double, double>>& bounds);

/// Squared centered L2 discrepancy of a design in [0,1]^d. Smaller values
/// mean a more uniform space filling.
double centered_l2_discrepancy(const Eigen::MatrixXd& u);

/// Squared wrap-around L2 discrepancy of a design in [0,1]^d, insensitive to
/// shifts modulo 1. The (4/3)^d term enters with a plus sign; see the project
/// README for a note on the constant offset relative to other conventions.
double wraparound_l2_discrepancy(const Eigen::MatrixXd& u);

struct LhsOptions {
  int n_restarts = 50;
  bool jitter = true;        // uniform jitter within each stratum
  bool swap_improve = true;  // greedy column-element swaps after sampling
};

/// Latin hypercube design in [0,1]^d maximizing the minimum pairwise
/// Euclidean distance over n_restarts randomized candidates. Deterministic
/// for a fixed seed; ties resolved by the lowest restart index.
Eigen::MatrixXd maximin_lhs(int n, int d, std::uint64_t seed,
                            const LhsOptions& opts = {});

/// Plain (non-optimized) Latin hypercube draw, used as a baseline.
Eigen::MatrixXd random_lhs(int n, int d, std::uint64_t seed, bool jitter = true);

double min_pairwise_distance(const Eigen::MatrixXd& pts);

/// True when every column occupies each stratum [i/n, (i+1)/n) exactly once.
bool is_latin_hypercube(const Eigen::MatrixXd& pts);

}  // namespace iuq::doe
