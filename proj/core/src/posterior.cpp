#include "iuq/posterior.hpp"

#include <gsl/gsl_multimin.h>
#include <gsl/gsl_sf_bessel.h>
#include <gsl/gsl_sf_gamma.h>
#include <gsl/gsl_sf_psi.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "iuq/common.hpp"

namespace iuq::posterior {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779;
constexpr double kKs5pct = 1.358;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// log I0(z) for z >= 0 without overflow.
double log_bessel_i0(double z) {
  return z + std::log(gsl_sf_bessel_I0_scaled(z));
}

double rician_log_pdf(double x, double nu, double sigma) {
  if (x <= 0.0) return -std::numeric_limits<double>::infinity();
  const double s2 = sigma * sigma;
  return std::log(x) - std::log(s2) - (x * x + nu * nu) / (2.0 * s2) +
         log_bessel_i0(x * nu / s2);
}

// Integrates a smooth pdf over [a, b] with composite 8-point Gauss-Legendre.
template <typename F>
double integrate(F&& pdf, double a, double b, double step_hint) {
  if (b <= a) return 0.0;
  static const double nodes[4] = {0.1834346424956498, 0.5255324099163290,
                                  0.7966664774136267, 0.9602898564975363};
  static const double weights[4] = {0.3626837833783620, 0.3137066458778873,
                                    0.2223810344533745, 0.1012285362903763};
  const int n_sub =
      std::max(1, static_cast<int>(std::ceil((b - a) / step_hint)));
  const double h = (b - a) / n_sub;
  double total = 0.0;
  for (int s = 0; s < n_sub; ++s) {
    const double mid = a + (s + 0.5) * h;
    const double half = 0.5 * h;
    double acc = 0.0;
    for (int k = 0; k < 4; ++k)
      acc += weights[k] *
             (pdf(mid - half * nodes[k]) + pdf(mid + half * nodes[k]));
    total += half * acc;
  }
  return total;
}

struct RicianObjective {
  const Eigen::VectorXd* samples;
};

double rician_negloglik(const gsl_vector* v, void* params) {
  const auto& obj = *static_cast<RicianObjective*>(params);
  const double nu = std::exp(gsl_vector_get(v, 0));
  const double sigma = std::exp(gsl_vector_get(v, 1));
  if (!std::isfinite(nu) || !std::isfinite(sigma) || sigma <= 0.0) return 1e100;
  double nll = 0.0;
  for (Eigen::Index i = 0; i < obj.samples->size(); ++i) {
    const double lp = rician_log_pdf((*obj.samples)(i), nu, sigma);
    if (!std::isfinite(lp)) return 1e100;
    nll -= lp;
  }
  return nll;
}

}  // namespace

std::string to_string(Family f) {
  switch (f) {
    case Family::Gaussian: return "gaussian";
    case Family::Gamma: return "gamma";
    case Family::Rician: return "rician";
  }
  return "?";
}

double FittedDistribution::pdf(double x) const {
  switch (family) {
    case Family::Gaussian: {
      const double z = (x - p1) / p2;
      return kInvSqrt2Pi / p2 * std::exp(-0.5 * z * z);
    }
    case Family::Gamma: {
      if (x <= 0.0) return 0.0;
      const double log_pdf = (p1 - 1.0) * std::log(x) - x / p2 -
                             gsl_sf_lngamma(p1) - p1 * std::log(p2);
      return std::exp(log_pdf);
    }
    case Family::Rician: {
      const double lp = rician_log_pdf(x, p1, p2);
      return std::isfinite(lp) ? std::exp(lp) : 0.0;
    }
  }
  return 0.0;
}

double FittedDistribution::cdf(double x) const {
  switch (family) {
    case Family::Gaussian:
      return normal_cdf((x - p1) / p2);
    case Family::Gamma:
      return x <= 0.0 ? 0.0 : gsl_sf_gamma_inc_P(p1, x / p2);
    case Family::Rician: {
      if (x <= 0.0) return 0.0;
      const double lo = std::max(0.0, p1 - 12.0 * p2);
      if (x <= lo) return 0.0;
      const double v =
          integrate([this](double t) { return pdf(t); }, lo, x, 0.25 * p2);
      return std::clamp(v, 0.0, 1.0);
    }
  }
  return 0.0;
}

double FittedDistribution::mean() const {
  switch (family) {
    case Family::Gaussian:
      return p1;
    case Family::Gamma:
      return p1 * p2;
    case Family::Rician: {
      // sigma * sqrt(pi/2) * L_{1/2}(-t) with t = nu^2 / (2 sigma^2),
      // written with scaled Bessel functions so large t cannot overflow.
      const double t = p1 * p1 / (2.0 * p2 * p2);
      const double l_half = (1.0 + t) * gsl_sf_bessel_I0_scaled(0.5 * t) +
                            t * gsl_sf_bessel_I1_scaled(0.5 * t);
      return p2 * std::sqrt(M_PI / 2.0) * l_half;
    }
  }
  return 0.0;
}

Moments moments(const Eigen::MatrixXd& samples) {
  const Eigen::Index n = samples.rows(), p = samples.cols();
  if (n < 2) throw DataError("moments: need at least 2 samples");
  Moments out;
  for (Eigen::Index k = 0; k < p; ++k) {
    const double mu = samples.col(k).mean();
    double ss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = samples(i, k) - mu;
      ss += d * d;
    }
    out.mean.push_back(mu);
    out.stddev.push_back(std::sqrt(ss / static_cast<double>(n - 1)));
  }
  return out;
}

double silverman_bandwidth(const Eigen::VectorXd& samples) {
  const Eigen::Index n = samples.size();
  if (n < 2) throw DataError("silverman_bandwidth: need at least 2 samples");
  const double mu = samples.mean();
  double ss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) ss += (samples(i) - mu) * (samples(i) - mu);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return i + 1 < sorted.size()
               ? sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
               : sorted[i];
  };
  const double iqr = quantile(0.75) - quantile(0.25);

  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0))
    throw DataError("silverman_bandwidth: zero-variance samples");
  return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

Eigen::VectorXd kde_density(const Eigen::VectorXd& samples,
                            const Eigen::VectorXd& grid) {
  if (samples.size() < 10) throw DataError("kde_density: need >= 10 samples");
  for (Eigen::Index g = 1; g < grid.size(); ++g)
    if (grid(g) < grid(g - 1)) throw DataError("kde_density: grid not sorted");
  const double h = silverman_bandwidth(samples);
  const double norm =
      1.0 / (static_cast<double>(samples.size()) * h) * kInvSqrt2Pi;
  Eigen::VectorXd density(grid.size());
  for (Eigen::Index g = 0; g < grid.size(); ++g) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < samples.size(); ++i) {
      const double z = (grid(g) - samples(i)) / h;
      acc += std::exp(-0.5 * z * z);
    }
    density(g) = norm * acc;
  }
  return density;
}

Eigen::MatrixXd kde_density_2d(const Eigen::VectorXd& xs,
                               const Eigen::VectorXd& ys,
                               const Eigen::VectorXd& grid_x,
                               const Eigen::VectorXd& grid_y) {
  if (xs.size() != ys.size() || xs.size() < 10)
    throw DataError("kde_density_2d: need >= 10 paired samples");
  const double hx = silverman_bandwidth(xs);
  const double hy = silverman_bandwidth(ys);
  const Eigen::Index n = xs.size();

  // Separable kernel: precompute the per-axis kernel tables.
  Eigen::MatrixXd kx(grid_x.size(), n), ky(grid_y.size(), n);
  for (Eigen::Index g = 0; g < grid_x.size(); ++g)
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z = (grid_x(g) - xs(i)) / hx;
      kx(g, i) = std::exp(-0.5 * z * z);
    }
  for (Eigen::Index g = 0; g < grid_y.size(); ++g)
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z = (grid_y(g) - ys(i)) / hy;
      ky(g, i) = std::exp(-0.5 * z * z);
    }
  const double norm = kInvSqrt2Pi * kInvSqrt2Pi /
                      (static_cast<double>(n) * hx * hy);
  return norm * (kx * ky.transpose());
}

double mode_map(const Eigen::VectorXd& samples) {
  if (samples.size() < 10) throw DataError("mode_map: need >= 10 samples");
  const double lo = samples.minCoeff(), hi = samples.maxCoeff();
  if (!(hi > lo)) return lo;  // constant samples
  const int grid_n = 512;
  Eigen::VectorXd grid(grid_n);
  for (int g = 0; g < grid_n; ++g)
    grid(g) = lo + (hi - lo) * static_cast<double>(g) / (grid_n - 1);
  const Eigen::VectorXd density = kde_density(samples, grid);
  Eigen::Index arg = 0;
  density.maxCoeff(&arg);
  return grid(arg);
}

FittedDistribution fit_distribution(const Eigen::VectorXd& samples,
                                    Family family) {
  const Eigen::Index n = samples.size();
  if (n < 10) throw DataError("fit_distribution: need >= 10 samples");

  FittedDistribution fit;
  fit.family = family;

  switch (family) {
    case Family::Gaussian: {
      const double mu = samples.mean();
      double ss = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) ss += (samples(i) - mu) * (samples(i) - mu);
      fit.p1 = mu;
      fit.p2 = std::sqrt(ss / static_cast<double>(n));
      if (!(fit.p2 > 0.0))
        throw DataError("fit_distribution: zero-variance samples");
      break;
    }
    case Family::Gamma: {
      if ((samples.array() <= 0.0).any())
        throw DataError(
            "fit_distribution: Gamma requires strictly positive samples");
      const double mean_x = samples.mean();
      double mean_log = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) mean_log += std::log(samples(i));
      mean_log /= static_cast<double>(n);
      const double s = std::log(mean_x) - mean_log;
      if (!(s > 0.0))
        throw DataError("fit_distribution: degenerate Gamma statistic");
      double alpha = (3.0 - s + std::sqrt((s - 3.0) * (s - 3.0) + 24.0 * s)) /
                     (12.0 * s);
      for (int it = 0; it < 100; ++it) {
        const double f = std::log(alpha) - gsl_sf_psi(alpha) - s;
        const double fp = 1.0 / alpha - gsl_sf_psi_1(alpha);
        const double step = f / fp;
        alpha -= step;
        if (alpha <= 0.0) alpha = 1e-8;
        if (std::abs(step) < 1e-12 * alpha) break;
      }
      fit.p1 = alpha;
      fit.p2 = mean_x / alpha;
      break;
    }
    case Family::Rician: {
      if ((samples.array() <= 0.0).any())
        throw DataError(
            "fit_distribution: Rician requires strictly positive samples");
      const double mu1 = samples.mean();
      const double mu2 = samples.array().square().mean();
      const double var = mu2 - mu1 * mu1;
      double sigma0 = std::sqrt(std::max(var, 1e-12 * mu2));
      double nu0 = std::sqrt(std::max(mu2 - 2.0 * sigma0 * sigma0, 1e-8 * mu2));

      RicianObjective obj{&samples};
      gsl_multimin_function f;
      f.n = 2;
      f.f = &rician_negloglik;
      f.params = &obj;
      gsl_vector* x0 = gsl_vector_alloc(2);
      gsl_vector* step = gsl_vector_alloc(2);
      gsl_vector_set(x0, 0, std::log(nu0));
      gsl_vector_set(x0, 1, std::log(sigma0));
      gsl_vector_set(step, 0, 0.5);
      gsl_vector_set(step, 1, 0.5);
      gsl_multimin_fminimizer* s =
          gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 2);
      gsl_multimin_fminimizer_set(s, &f, x0, step);
      for (int it = 0; it < 400; ++it) {
        if (gsl_multimin_fminimizer_iterate(s) != 0) break;
        if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-9) ==
            GSL_SUCCESS)
          break;
      }
      fit.p1 = std::exp(gsl_vector_get(s->x, 0));
      fit.p2 = std::exp(gsl_vector_get(s->x, 1));
      gsl_multimin_fminimizer_free(s);
      gsl_vector_free(x0);
      gsl_vector_free(step);
      break;
    }
  }

  const KsResult ks = ks_test(samples, fit);
  fit.ks_statistic = ks.statistic;
  fit.ks_accepted_at_5pct = ks.accepted_at_5pct;
  return fit;
}

FittedDistribution fit_best(const Eigen::VectorXd& samples) {
  std::vector<Family> candidates = {Family::Gaussian};
  if ((samples.array() > 0.0).all()) {
    candidates.push_back(Family::Gamma);
    candidates.push_back(Family::Rician);
  }
  FittedDistribution best;
  bool have = false;
  for (Family f : candidates) {
    try {
      FittedDistribution fit = fit_distribution(samples, f);
      if (!have || fit.ks_statistic < best.ks_statistic) {
        best = fit;
        have = true;
      }
    } catch (const DataError&) {
      // family not applicable to this sample set
    }
  }
  if (!have) throw DataError("fit_best: no family could be fitted");
  return best;
}

KsResult ks_test(const Eigen::VectorXd& samples,
                 const FittedDistribution& dist) {
  const Eigen::Index n = samples.size();
  if (n < 10) throw DataError("ks_test: need >= 10 samples");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());

  double d = 0.0;
  if (dist.family == Family::Rician) {
    // One incremental sweep so the quadrature runs once over the support.
    const double lo = std::max(0.0, dist.p1 - 12.0 * dist.p2);
    double prev = lo, acc = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      const double x = std::max(sorted[i], lo);
      acc += integrate([&dist](double t) { return dist.pdf(t); }, prev, x,
                       0.25 * dist.p2);
      prev = x;
      const double f = std::clamp(acc, 0.0, 1.0);
      const double hi_gap = std::abs((static_cast<double>(i) + 1.0) / static_cast<double>(n) - f);
      const double lo_gap = std::abs(f - static_cast<double>(i) / static_cast<double>(n));
      d = std::max({d, hi_gap, lo_gap});
    }
  } else {
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      const double f = dist.cdf(sorted[i]);
      const double hi_gap = std::abs((static_cast<double>(i) + 1.0) / static_cast<double>(n) - f);
      const double lo_gap = std::abs(f - static_cast<double>(i) / static_cast<double>(n));
      d = std::max({d, hi_gap, lo_gap});
    }
  }

  KsResult out;
  out.statistic = d;
  out.accepted_at_5pct = d < kKs5pct / std::sqrt(static_cast<double>(n));
  return out;
}

Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& samples) {
  const Eigen::Index n = samples.rows(), p = samples.cols();
  if (n < 3) throw DataError("correlation_matrix: need at least 3 samples");
  Eigen::VectorXd mu(p), sd(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    mu(k) = samples.col(k).mean();
    double ss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = samples(i, k) - mu(k);
      ss += d * d;
    }
    sd(k) = std::sqrt(ss);
    if (!(sd(k) > 0.0))
      throw DataError("correlation_matrix: zero variance in column " +
                      std::to_string(k));
  }
  Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(p, p);
  for (Eigen::Index a = 0; a < p; ++a)
    for (Eigen::Index b = a + 1; b < p; ++b) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        acc += (samples(i, a) - mu(a)) * (samples(i, b) - mu(b));
      const double r = acc / (sd(a) * sd(b));
      corr(a, b) = corr(b, a) = std::clamp(r, -1.0, 1.0);
    }
  return corr;
}

EmpiricalCdf::EmpiricalCdf(const Eigen::VectorXd& samples)
    : sorted_(samples.begin(), samples.end()) {
  if (sorted_.empty()) throw DataError("EmpiricalCdf: empty sample");
  std::sort(sorted_.begin(), sorted_.end());
}

double EmpiricalCdf::operator()(double x) const {
  const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), x);
  return static_cast<double>(it - sorted_.begin()) /
         static_cast<double>(sorted_.size());
}

PosteriorSummary summarize(const Eigen::MatrixXd& samples,
                           const std::vector<std::string>& names) {
  const Eigen::Index p = samples.cols();
  if (static_cast<Eigen::Index>(names.size()) != p)
    throw DataError("summarize: name count mismatch");
  PosteriorSummary out;
  out.names = names;
  const Moments mom = moments(samples);
  out.mean = mom.mean;
  out.stddev = mom.stddev;
  for (Eigen::Index k = 0; k < p; ++k) {
    out.mode.push_back(mode_map(samples.col(k)));
    out.fitted.push_back(fit_best(samples.col(k)));
  }
  out.correlation = correlation_matrix(samples);
  return out;
}

std::string summary_to_json(const PosteriorSummary& summary) {
  nlohmann::json j;
  nlohmann::json params = nlohmann::json::object();
  for (std::size_t k = 0; k < summary.names.size(); ++k) {
    const auto& fit = summary.fitted[k];
    params[summary.names[k]] = {
        {"mean", summary.mean[k]},
        {"std", summary.stddev[k]},
        {"mode", summary.mode[k]},
        {"fitted",
         {{"family", to_string(fit.family)},
          {"param1", fit.p1},
          {"param2", fit.p2},
          {"ks_statistic", fit.ks_statistic},
          {"ks_accepted_at_5pct", fit.ks_accepted_at_5pct}}}};
  }
  j["parameters"] = params;
  std::vector<std::vector<double>> corr;
  for (Eigen::Index a = 0; a < summary.correlation.rows(); ++a) {
    std::vector<double> row;
    for (Eigen::Index b = 0; b < summary.correlation.cols(); ++b)
      row.push_back(summary.correlation(a, b));
    corr.push_back(std::move(row));
  }
  j["correlation"] = corr;
  return j.dump(2);
}

}  // namespace iuq::posterior
