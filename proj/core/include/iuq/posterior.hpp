#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace iuq::posterior {

enum class Family { Gaussian, Gamma, Rician };

std::string to_string(Family f);

/// Parametric fit of a posterior marginal. Parameter meaning by family:
/// Gaussian (mu, sigma), Gamma (shape, scale), Rician (noncentrality s,
/// sigma). Gamma and Rician keep strictly positive support.
struct FittedDistribution {
  Family family = Family::Gaussian;
  double p1 = 0.0;
  double p2 = 1.0;
  double ks_statistic = 0.0;
  bool ks_accepted_at_5pct = false;

  double pdf(double x) const;
  double cdf(double x) const;
  double mean() const;  // analytic mean of the fitted family
};

struct Moments {
  std::vector<double> mean;
  std::vector<double> stddev;  // N-1 denominator
};

/// Sample mean and standard deviation per column.
Moments moments(const Eigen::MatrixXd& samples);

/// Silverman's rule bandwidth for a Gaussian-kernel KDE.
double silverman_bandwidth(const Eigen::VectorXd& samples);

/// Gaussian-kernel KDE with Silverman bandwidth on a sorted grid.
Eigen::VectorXd kde_density(const Eigen::VectorXd& samples,
                            const Eigen::VectorXd& grid);

/// Product-kernel 2D KDE evaluated on the tensor grid (row = x index).
Eigen::MatrixXd kde_density_2d(const Eigen::VectorXd& xs,
                               const Eigen::VectorXd& ys,
                               const Eigen::VectorXd& grid_x,
                               const Eigen::VectorXd& grid_y);

/// MAP estimate: the KDE argmax over a 512-point grid spanning the samples.
double mode_map(const Eigen::VectorXd& samples);

/// Maximum-likelihood fit of the requested family; the KS test runs
/// automatically. Gamma and Rician require strictly positive samples.
FittedDistribution fit_distribution(const Eigen::VectorXd& samples,
                                    Family family);

/// Fits every family the sample support allows and returns the one with the
/// smallest KS statistic.
FittedDistribution fit_best(const Eigen::VectorXd& samples);

struct KsResult {
  double statistic = 0.0;
  bool accepted_at_5pct = false;
};

/// One-sample Kolmogorov-Smirnov test against the fitted distribution,
/// using the asymptotic 5% critical value 1.358/sqrt(N).
KsResult ks_test(const Eigen::VectorXd& samples,
                 const FittedDistribution& dist);

/// Pearson correlation matrix; throws naming any zero-variance column.
Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& samples);

/// Right-continuous empirical CDF.
class EmpiricalCdf {
 public:
  explicit EmpiricalCdf(const Eigen::VectorXd& samples);
  double operator()(double x) const;

 private:
  std::vector<double> sorted_;
};

/// Per-parameter posterior summary and the correlation matrix.
struct PosteriorSummary {
  std::vector<std::string> names;
  std::vector<double> mean, stddev, mode;
  std::vector<FittedDistribution> fitted;
  Eigen::MatrixXd correlation;
};

PosteriorSummary summarize(const Eigen::MatrixXd& samples,
                           const std::vector<std::string>& names);

std::string summary_to_json(const PosteriorSummary& summary);

}  // namespace iuq::posterior
