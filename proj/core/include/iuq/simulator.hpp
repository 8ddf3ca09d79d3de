#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace iuq::sim {

/// A simulator maps (design variables x, calibration parameters theta) to
/// the m model outputs. Implementations must be pure and thread-safe.
using Simulator =
    std::function<Eigen::VectorXd(const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& theta)>;

/// Serves precomputed runs from a CSV with schema
/// `test_id,x1..xr,theta1..thetap,y1..ym`. Lookups match rows coordinate-wise
/// within a relative tolerance; a missing row raises DataError naming the
/// requested point, so callers can emit a request file for offline runs.
class TabulatedSimulator {
 public:
  TabulatedSimulator(const std::string& path, int r, int p, int m);

  Eigen::VectorXd operator()(const Eigen::VectorXd& x,
                             const Eigen::VectorXd& theta) const;

  int rows() const { return static_cast<int>(inputs_.rows()); }

 private:
  Eigen::MatrixXd inputs_;   // n x (r+p)
  Eigen::MatrixXd outputs_;  // n x m
  double tol_ = 1e-9;
};

/// Writes the request schema consumed by TabulatedSimulator (y columns are
/// filled by the external code).
void write_design_request(const std::string& path,
                          const std::vector<int>& test_ids,
                          const Eigen::MatrixXd& inputs, int r, int p, int m);

}  // namespace iuq::sim
