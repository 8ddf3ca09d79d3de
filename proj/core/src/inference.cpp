#include "iuq/inference.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "iuq/common.hpp"
#include "iuq/dataio.hpp"

namespace iuq::inference {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void LikelihoodContext::validate() const {
  const auto n = y_obs.size();
  if (n == 0) throw DataError("LikelihoodContext: empty observation vector");
  if (delta.size() != n || sigma_exp.size() != n || sigma_bias.size() != n)
    throw DataError("LikelihoodContext: stacked vector lengths differ");
  if ((sigma_exp.array() < 0).any() || (sigma_bias.array() < 0).any())
    throw DataError("LikelihoodContext: negative variance entry");
  if (emulator == nullptr) throw DataError("LikelihoodContext: no emulator");
  if (x_iuq.rows() * emulator->qoi_count() != n)
    throw DataError("LikelihoodContext: x_iuq/emulator shape mismatch");
}

void LikelihoodContext::freeze_code_variance_at(const Eigen::VectorXd& theta0) {
  Eigen::MatrixXd mean, mse;
  emulator->predict(x_iuq, theta0, mean, mse);
  const int m = emulator->qoi_count();
  frozen_sigma_code.resize(y_obs.size());
  for (Eigen::Index i = 0; i < x_iuq.rows(); ++i)
    for (int q = 0; q < m; ++q) frozen_sigma_code(i * m + q) = mse(i, q);
  freeze_sigma_code = true;
}

double log_prior(const Eigen::VectorXd& theta, const bayes::PriorSpec& prior) {
  if (theta.size() != prior.size())
    throw DataError("log_prior: dimension mismatch");
  for (Eigen::Index k = 0; k < theta.size(); ++k)
    if (theta(k) <= prior.lower(k) || theta(k) >= prior.upper(k))
      return kNegInf;
  return 0.0;
}

double log_likelihood(const Eigen::VectorXd& theta,
                      const LikelihoodContext& ctx, LikelihoodMode mode) {
  const int m = ctx.emulator->qoi_count();
  const Eigen::Index n = ctx.y_obs.size();

  Eigen::MatrixXd mean, mse;
  ctx.emulator->predict(ctx.x_iuq, theta, mean, mse);

  double quad = 0.0, log_det = 0.0;
  for (Eigen::Index i = 0; i < ctx.x_iuq.rows(); ++i) {
    for (int q = 0; q < m; ++q) {
      const Eigen::Index idx = i * m + q;
      const double sigma_code =
          ctx.freeze_sigma_code ? ctx.frozen_sigma_code(idx) : mse(i, q);
      double variance = ctx.sigma_exp(idx) + sigma_code;
      double resid = ctx.y_obs(idx) - mean(i, q);
      if (mode == LikelihoodMode::WithBias) {
        variance += ctx.sigma_bias(idx);
        resid -= ctx.delta(idx);
      }
      if (!(variance > 0.0))
        throw NumericalError("log_likelihood: nonpositive total variance at "
                             "stacked index " +
                             std::to_string(idx));
      quad += resid * resid / variance;
      log_det += std::log(variance);
    }
  }
  (void)n;
  return -0.5 * quad - 0.5 * log_det;
}

AdaptConfig AdaptConfig::from_prior(const bayes::PriorSpec& prior) {
  AdaptConfig cfg;
  const Eigen::VectorXd range = prior.upper - prior.lower;
  cfg.initial_step = 0.01 * range;
  cfg.epsilon = 1e-6 * range.array().square().mean();
  return cfg;
}

PosteriorChain adaptive_metropolis(const LogPostFn& log_post,
                                   const Eigen::VectorXd& init, int n_samples,
                                   std::uint64_t seed, const AdaptConfig& cfg) {
  const Eigen::Index p = init.size();
  if (n_samples < 1000)
    throw ConfigError("adaptive_metropolis: n_samples must be >= 1000");
  if (cfg.initial_step.size() != p)
    throw ConfigError("adaptive_metropolis: initial_step dimension mismatch");
  if (!(cfg.epsilon > 0.0))
    throw ConfigError("adaptive_metropolis: epsilon must be positive");

  double current_lp = log_post(init);
  if (!std::isfinite(current_lp))
    throw NumericalError(
        "adaptive_metropolis: log posterior is not finite at the start point");

  PosteriorChain chain;
  chain.samples.resize(n_samples, p);
  chain.log_posts.resize(n_samples);
  chain.accepted.assign(static_cast<std::size_t>(n_samples), 0);
  chain.seed = seed;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Eigen::VectorXd current = init;

  // Running moments over the whole history for the covariance adaptation.
  Eigen::VectorXd run_mean = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd run_m2 = Eigen::MatrixXd::Zero(p, p);
  long hist = 0;
  auto update_moments = [&](const Eigen::VectorXd& x) {
    ++hist;
    const Eigen::VectorXd d0 = x - run_mean;
    run_mean += d0 / static_cast<double>(hist);
    run_m2 += d0 * (x - run_mean).transpose();
  };
  update_moments(current);

  const double sd = 2.38 * 2.38 / static_cast<double>(p);
  Eigen::MatrixXd prop_chol = cfg.initial_step.asDiagonal();
  bool adapted = false;

  long n_accept = 0;
  bool warned_stuck = false;
  Eigen::VectorXd z(p), proposal(p);
  for (int it = 0; it < n_samples; ++it) {
    if (it >= cfg.warmup && hist > 1) {
      Eigen::MatrixXd cov =
          sd * (run_m2 / static_cast<double>(hist - 1)) +
          cfg.epsilon * Eigen::MatrixXd::Identity(p, p);
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      if (llt.info() == Eigen::Success) {
        prop_chol = llt.matrixL();
        adapted = true;
      }
    }

    for (Eigen::Index k = 0; k < p; ++k) z(k) = gauss(rng);
    proposal = current + prop_chol * z;

    const double lp = log_post(proposal);
    const double log_ratio = lp - current_lp;
    bool accept = false;
    if (std::isfinite(lp)) {
      accept = log_ratio >= 0.0 || std::log(unif(rng)) < log_ratio;
    } else {
      unif(rng);  // keep the stream aligned regardless of the branch
    }
    if (accept) {
      current = proposal;
      current_lp = lp;
      ++n_accept;
      chain.accepted[static_cast<std::size_t>(it)] = 1;
    }

    chain.samples.row(it) = current.transpose();
    chain.log_posts(it) = current_lp;
    update_moments(current);

    if (!warned_stuck && it == 1999 && n_accept == 0) {
      log_warn("adaptive_metropolis: no accepted move in the first 2000 "
               "iterations; check the starting point and step sizes");
      warned_stuck = true;
    }
  }
  (void)adapted;

  chain.acceptance_rate =
      static_cast<double>(n_accept) / static_cast<double>(n_samples);
  return chain;
}

Eigen::MatrixXd postprocess_samples(const Eigen::MatrixXd& samples,
                                    int burn_in, int thin) {
  if (burn_in < 0 || burn_in >= samples.rows())
    throw ConfigError("postprocess: burn_in must be < chain length");
  if (thin < 1) throw ConfigError("postprocess: thin must be >= 1");
  const Eigen::Index kept =
      (samples.rows() - burn_in + thin - 1) / thin;
  if (kept <= 0) throw ConfigError("postprocess: empty result");
  Eigen::MatrixXd out(kept, samples.cols());
  Eigen::Index w = 0;
  for (Eigen::Index i = burn_in; i < samples.rows(); i += thin)
    out.row(w++) = samples.row(i);
  return out;
}

Eigen::MatrixXd postprocess_chain(const PosteriorChain& chain, int burn_in,
                                  int thin) {
  return postprocess_samples(chain.samples, burn_in, thin);
}

void write_chain_csv(const std::string& path, const PosteriorChain& chain) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.precision(17);
  out << "iter";
  for (Eigen::Index k = 1; k <= chain.samples.cols(); ++k) out << ",theta" << k;
  out << ",log_post,accepted\n";
  for (Eigen::Index i = 0; i < chain.samples.rows(); ++i) {
    out << i;
    for (Eigen::Index k = 0; k < chain.samples.cols(); ++k)
      out << "," << chain.samples(i, k);
    out << "," << chain.log_posts(i) << ","
        << static_cast<int>(chain.accepted[static_cast<std::size_t>(i)]) << "\n";
  }
}

PosteriorChain read_chain_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty chain file");
  const auto header = io::split_csv_line(line);
  if (header.size() < 4 || header.front() != "iter" ||
      header.back() != "accepted" || header[header.size() - 2] != "log_post")
    throw DataError(path + ": unexpected chain header");
  const int p = static_cast<int>(header.size()) - 3;

  std::vector<std::vector<double>> rows;
  std::vector<double> lps;
  std::vector<std::uint8_t> acc;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = io::split_csv_line(line);
    const std::string ctx = path + ":" + std::to_string(lineno);
    if (static_cast<int>(cells.size()) != p + 3)
      throw DataError(ctx + ": wrong cell count");
    std::vector<double> theta(static_cast<std::size_t>(p));
    for (int k = 0; k < p; ++k)
      theta[static_cast<std::size_t>(k)] =
          io::parse_double(cells[static_cast<std::size_t>(k + 1)], ctx);
    rows.push_back(std::move(theta));
    lps.push_back(io::parse_double(cells[static_cast<std::size_t>(p + 1)], ctx));
    acc.push_back(static_cast<std::uint8_t>(
        io::parse_double(cells[static_cast<std::size_t>(p + 2)], ctx) != 0.0));
  }
  if (rows.empty()) throw DataError(path + ": no samples");

  PosteriorChain chain;
  chain.samples.resize(static_cast<Eigen::Index>(rows.size()), p);
  chain.log_posts.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int k = 0; k < p; ++k)
      chain.samples(static_cast<Eigen::Index>(i), k) = rows[i][static_cast<std::size_t>(k)];
    chain.log_posts(static_cast<Eigen::Index>(i)) = lps[i];
  }
  chain.accepted = std::move(acc);
  long n_acc = 0;
  for (auto a : chain.accepted) n_acc += a;
  chain.acceptance_rate =
      static_cast<double>(n_acc) / static_cast<double>(chain.accepted.size());
  return chain;
}

}  // namespace iuq::inference
