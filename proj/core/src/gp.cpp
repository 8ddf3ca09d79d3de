#include "iuq/gp.hpp"

#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "iuq/common.hpp"

namespace iuq::gp {

namespace {

constexpr double kBadValue = 1e100;

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return std::mt19937_64(z ^ (z >> 31));
}

// Per-dimension squared distance matrices, built once per fit.
std::vector<Eigen::MatrixXd> pairwise_sqdist(const Eigen::MatrixXd& U) {
  const Eigen::Index n = U.rows(), d = U.cols();
  std::vector<Eigen::MatrixXd> D2(static_cast<std::size_t>(d));
  for (Eigen::Index k = 0; k < d; ++k) {
    D2[static_cast<std::size_t>(k)].resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) {
        const double diff = U(i, k) - U(j, k);
        D2[static_cast<std::size_t>(k)](i, j) = diff * diff;
      }
  }
  return D2;
}

Eigen::MatrixXd correlation_matrix_lower(const std::vector<Eigen::MatrixXd>& D2,
                                         const Eigen::VectorXd& lengthscales,
                                         double nugget_rel) {
  const Eigen::Index n = D2.empty() ? 0 : D2[0].rows();
  const Eigen::Index d = static_cast<Eigen::Index>(D2.size());
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index k = 0; k < d; ++k) {
    const double inv2 = 0.5 / (lengthscales(k) * lengthscales(k));
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j)
        R(i, j) -= inv2 * D2[static_cast<std::size_t>(k)](i, j);
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) R(i, j) = std::exp(R(i, j));
  for (Eigen::Index i = 0; i < n; ++i) R(i, i) += nugget_rel;
  return R;
}

struct ConcentratedFit {
  double neg_log_lik = kBadValue;
  double mean_const = 0.0;
  double signal_variance = 0.0;
  bool ok = false;
};

// Profiles the constant mean (GLS) and signal variance out of the marginal
// likelihood for fixed lengthscales.
ConcentratedFit evaluate_candidate(const std::vector<Eigen::MatrixXd>& D2,
                                   const Eigen::VectorXd& z,
                                   const Eigen::VectorXd& lengthscales,
                                   double nugget_rel,
                                   Eigen::LLT<Eigen::MatrixXd>* keep_chol) {
  ConcentratedFit out;
  const Eigen::Index n = z.size();
  Eigen::MatrixXd R = correlation_matrix_lower(D2, lengthscales, nugget_rel);
  Eigen::LLT<Eigen::MatrixXd> llt(R.selfadjointView<Eigen::Lower>());
  if (llt.info() != Eigen::Success) return out;

  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const Eigen::VectorXd rinv_one = llt.solve(ones);
  const double one_rinv_one = ones.dot(rinv_one);
  if (!(one_rinv_one > 0.0)) return out;
  const double beta = z.dot(rinv_one) / one_rinv_one;

  const Eigen::VectorXd resid = z.array() - beta;
  const Eigen::VectorXd rinv_resid = llt.solve(resid);
  double sigma2 = resid.dot(rinv_resid) / static_cast<double>(n);
  sigma2 = std::max(sigma2, 1e-300);

  double log_det = 0.0;
  const auto& L = llt.matrixLLT();
  for (Eigen::Index i = 0; i < n; ++i) log_det += 2.0 * std::log(L(i, i));
  if (!std::isfinite(log_det)) return out;

  out.neg_log_lik =
      0.5 * (static_cast<double>(n) * std::log(sigma2) + log_det);
  if (!std::isfinite(out.neg_log_lik)) return out;
  out.mean_const = beta;
  out.signal_variance = sigma2;
  out.ok = true;
  if (keep_chol) *keep_chol = std::move(llt);
  return out;
}

struct Objective {
  const std::vector<Eigen::MatrixXd>* D2;
  const Eigen::VectorXd* z;
  double nugget_rel;
  double log10_min, log10_max;
};

double objective_fn(const gsl_vector* v, void* params) {
  const auto& obj = *static_cast<Objective*>(params);
  const auto d = static_cast<Eigen::Index>(v->size);
  Eigen::VectorXd ls(d);
  double penalty = 0.0;
  for (Eigen::Index k = 0; k < d; ++k) {
    const double lk = gsl_vector_get(v, static_cast<std::size_t>(k));
    const double below = obj.log10_min - lk;
    const double above = lk - obj.log10_max;
    if (below > 0) penalty += 1e4 * below * below;
    if (above > 0) penalty += 1e4 * above * above;
    ls(k) = std::pow(10.0, std::clamp(lk, obj.log10_min - 1.0, obj.log10_max + 1.0));
  }
  const auto fit = evaluate_candidate(*obj.D2, *obj.z, ls, obj.nugget_rel, nullptr);
  if (!fit.ok) return kBadValue;
  return fit.neg_log_lik + penalty;
}

struct StartResult {
  double value = kBadValue;
  Eigen::VectorXd log10_ls;
  bool ok = false;
};

StartResult run_simplex(const Objective& obj, const Eigen::VectorXd& start,
                        int max_iters, double tol) {
  const auto d = static_cast<std::size_t>(start.size());
  gsl_vector* x = gsl_vector_alloc(d);
  gsl_vector* step = gsl_vector_alloc(d);
  for (std::size_t k = 0; k < d; ++k) {
    gsl_vector_set(x, k, start(static_cast<Eigen::Index>(k)));
    gsl_vector_set(step, k, 0.4);
  }

  gsl_multimin_function f;
  f.n = d;
  f.f = &objective_fn;
  f.params = const_cast<Objective*>(&obj);

  gsl_multimin_fminimizer* s =
      gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, d);
  gsl_multimin_fminimizer_set(s, &f, x, step);

  StartResult result;
  for (int iter = 0; iter < max_iters; ++iter) {
    if (gsl_multimin_fminimizer_iterate(s) != 0) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), tol) ==
        GSL_SUCCESS)
      break;
  }
  result.value = s->fval;
  result.log10_ls.resize(static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < d; ++k)
    result.log10_ls(static_cast<Eigen::Index>(k)) = gsl_vector_get(s->x, k);
  result.ok = result.value < kBadValue;

  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(x);
  gsl_vector_free(step);
  return result;
}

Eigen::VectorXd cross_correlation(const GpModel& m, const Eigen::VectorXd& u) {
  const Eigen::Index n = m.train_u.rows(), d = m.train_u.cols();
  Eigen::VectorXd k(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double arg = 0.0;
    for (Eigen::Index kk = 0; kk < d; ++kk) {
      const double diff = (m.train_u(i, kk) - u(kk)) / m.lengthscales(kk);
      arg += diff * diff;
    }
    k(i) = std::exp(-0.5 * arg);
  }
  return k;
}

}  // namespace

Eigen::MatrixXd GpModel::normalize_inputs(const Eigen::MatrixXd& X) const {
  if (X.cols() != static_cast<Eigen::Index>(input_bounds.size()))
    throw DataError("GpModel: query dimension " + std::to_string(X.cols()) +
                    " does not match training dimension " +
                    std::to_string(input_bounds.size()));
  Eigen::MatrixXd U(X.rows(), X.cols());
  for (Eigen::Index k = 0; k < X.cols(); ++k) {
    const auto [lo, hi] = input_bounds[static_cast<std::size_t>(k)];
    const double w = hi - lo;
    U.col(k) = (X.col(k).array() - lo) / w;
  }
  return U;
}

GpModel fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
            const GpConfig& config, std::uint64_t seed) {
  const Eigen::Index n = X.rows(), d = X.cols();
  if (n < 1 || d < 1) throw DataError("gp::fit: empty training set");
  if (y.size() != n) throw DataError("gp::fit: X/y size mismatch");
  if (!X.allFinite() || !y.allFinite())
    throw DataError("gp::fit: non-finite training data");
  if (n < d + 2)
    log_warn("gp::fit: only " + std::to_string(n) + " points for " +
             std::to_string(d) + " input dimensions");

  GpModel m;
  m.input_bounds.reserve(static_cast<std::size_t>(d));
  for (Eigen::Index k = 0; k < d; ++k) {
    double lo = X.col(k).minCoeff(), hi = X.col(k).maxCoeff();
    if (!(hi - lo > 0)) hi = lo + 1.0;  // constant column: map to 0
    m.input_bounds.emplace_back(lo, hi);
  }
  m.train_u = m.normalize_inputs(X);

  m.y_mean = y.mean();
  double var = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dv = y(i) - m.y_mean;
    var += dv * dv;
  }
  var = n > 1 ? var / static_cast<double>(n - 1) : 0.0;
  m.y_std = var > 0 ? std::sqrt(var) : 1.0;
  m.train_z = (y.array() - m.y_mean) / m.y_std;
  m.nugget_rel = config.nugget_rel;

  const auto D2 = pairwise_sqdist(m.train_u);

  Objective obj;
  obj.D2 = &D2;
  obj.z = &m.train_z;
  obj.nugget_rel = config.nugget_rel;
  obj.log10_min = std::log10(config.lengthscale_min);
  obj.log10_max = std::log10(config.lengthscale_max);

  const int n_starts = std::max(1, config.n_starts);
  std::vector<StartResult> results(static_cast<std::size_t>(n_starts));
  parallel_for(static_cast<std::size_t>(n_starts), [&](std::size_t s) {
    auto rng = make_rng(seed, s);
    std::uniform_real_distribution<double> unif(obj.log10_min, obj.log10_max);
    Eigen::VectorXd start(d);
    for (Eigen::Index k = 0; k < d; ++k) start(k) = unif(rng);
    results[s] = run_simplex(obj, start, config.max_iters, config.simplex_tol);
  });

  int best = -1;
  for (int s = 0; s < n_starts; ++s) {
    if (!results[static_cast<std::size_t>(s)].ok) continue;
    if (best < 0 || results[static_cast<std::size_t>(s)].value <
                        results[static_cast<std::size_t>(best)].value)
      best = s;
  }
  if (best < 0)
    throw NumericalError(
        "gp::fit: no multi-start produced a positive-definite kernel");

  Eigen::VectorXd ls(d);
  for (Eigen::Index k = 0; k < d; ++k)
    ls(k) = std::pow(10.0, std::clamp(results[static_cast<std::size_t>(best)].log10_ls(k),
                                      obj.log10_min, obj.log10_max));
  m.lengthscales = ls;

  const auto final_fit =
      evaluate_candidate(D2, m.train_z, ls, config.nugget_rel, &m.chol);
  if (!final_fit.ok)
    throw NumericalError("gp::fit: final factorization failed");
  m.mean_const = final_fit.mean_const;
  m.signal_variance = final_fit.signal_variance;
  m.log_lik = -final_fit.neg_log_lik;

  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  m.rinv_one = m.chol.solve(ones);
  m.one_rinv_one = ones.dot(m.rinv_one);
  m.alpha = m.chol.solve(Eigen::VectorXd(m.train_z.array() - m.mean_const));
  return m;
}

void predict(const GpModel& m, const Eigen::MatrixXd& Xstar,
             Eigen::VectorXd& mean, Eigen::VectorXd& mse) {
  if (!Xstar.allFinite()) throw DataError("gp::predict: non-finite query");
  const Eigen::MatrixXd U = m.normalize_inputs(Xstar);
  const Eigen::Index nq = U.rows();
  mean.resize(nq);
  mse.resize(nq);
  for (Eigen::Index q = 0; q < nq; ++q) {
    const Eigen::VectorXd k = cross_correlation(m, U.row(q).transpose());
    const Eigen::VectorXd rinv_k = m.chol.solve(k);
    const double zhat = m.mean_const + k.dot(m.alpha);
    mean(q) = m.y_mean + m.y_std * zhat;
    const double gls = 1.0 - m.rinv_one.dot(k);
    double v = m.signal_variance *
               (1.0 - k.dot(rinv_k) + gls * gls / m.one_rinv_one);
    mse(q) = std::max(0.0, v) * m.y_std * m.y_std;
  }
}

Eigen::VectorXd predict_mean(const GpModel& m, const Eigen::MatrixXd& Xstar) {
  Eigen::VectorXd mean, mse;
  predict(m, Xstar, mean, mse);
  return mean;
}

double loocv_error(const GpModel& m) {
  const Eigen::Index n = m.train_u.rows();
  const Eigen::MatrixXd rinv =
      m.chol.solve(Eigen::MatrixXd::Identity(n, n));
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double qii = rinv(i, i) - m.rinv_one(i) * m.rinv_one(i) / m.one_rinv_one;
    if (!(qii > 0.0))
      throw NumericalError("gp::loocv_error: singular projected precision");
    const double e = m.alpha(i) / qii;  // standardized LOO residual
    sum += e * e;
  }
  return (sum / static_cast<double>(n)) * m.y_std * m.y_std;
}

double predictivity_q2(const GpModel& m, const Eigen::MatrixXd& Xtest,
                       const Eigen::VectorXd& ytest) {
  if (Xtest.rows() != ytest.size())
    throw DataError("gp::predictivity_q2: X/y size mismatch");
  const Eigen::VectorXd yhat = predict_mean(m, Xtest);
  const double ybar = ytest.mean();
  double ss_res = 0.0, ss_tot = 0.0;
  for (Eigen::Index i = 0; i < ytest.size(); ++i) {
    ss_res += (ytest(i) - yhat(i)) * (ytest(i) - yhat(i));
    ss_tot += (ytest(i) - ybar) * (ytest(i) - ybar);
  }
  if (!(ss_tot > 0.0))
    throw DataError("gp::predictivity_q2: zero variance in test outputs");
  return 1.0 - ss_res / ss_tot;
}

std::string to_json(const GpModel& m) {
  nlohmann::json j;
  j["kind"] = "iuq.gp";
  j["input_bounds"] = m.input_bounds;
  j["lengthscales"] = std::vector<double>(m.lengthscales.begin(), m.lengthscales.end());
  j["signal_variance"] = m.signal_variance;
  j["nugget_rel"] = m.nugget_rel;
  j["mean_const"] = m.mean_const;
  j["y_mean"] = m.y_mean;
  j["y_std"] = m.y_std;
  j["log_lik"] = m.log_lik;
  std::vector<std::vector<double>> rows;
  rows.reserve(static_cast<std::size_t>(m.train_u.rows()));
  for (Eigen::Index i = 0; i < m.train_u.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.train_u.cols()));
    for (Eigen::Index k = 0; k < m.train_u.cols(); ++k)
      row[static_cast<std::size_t>(k)] = m.train_u(i, k);
    rows.push_back(std::move(row));
  }
  j["train_u"] = rows;
  j["train_z"] = std::vector<double>(m.train_z.begin(), m.train_z.end());
  return j.dump();
}

GpModel from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("gp::from_json: ") + e.what());
  }
  if (j.value("kind", "") != "iuq.gp")
    throw DataError("gp::from_json: not a GP model document");

  GpModel m;
  m.input_bounds = j.at("input_bounds").get<std::vector<std::pair<double, double>>>();
  const auto ls = j.at("lengthscales").get<std::vector<double>>();
  m.lengthscales = Eigen::Map<const Eigen::VectorXd>(ls.data(), static_cast<Eigen::Index>(ls.size()));
  m.signal_variance = j.at("signal_variance").get<double>();
  m.nugget_rel = j.at("nugget_rel").get<double>();
  m.mean_const = j.at("mean_const").get<double>();
  m.y_mean = j.at("y_mean").get<double>();
  m.y_std = j.at("y_std").get<double>();
  m.log_lik = j.value("log_lik", 0.0);

  const auto rows = j.at("train_u").get<std::vector<std::vector<double>>>();
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(m.lengthscales.size());
  m.train_u.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < d; ++k)
      m.train_u(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  const auto z = j.at("train_z").get<std::vector<double>>();
  m.train_z = Eigen::Map<const Eigen::VectorXd>(z.data(), n);

  const auto D2 = pairwise_sqdist(m.train_u);
  Eigen::MatrixXd R = correlation_matrix_lower(D2, m.lengthscales, m.nugget_rel);
  m.chol.compute(R.selfadjointView<Eigen::Lower>());
  if (m.chol.info() != Eigen::Success)
    throw NumericalError("gp::from_json: kernel factorization failed");
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  m.rinv_one = m.chol.solve(ones);
  m.one_rinv_one = ones.dot(m.rinv_one);
  m.alpha = m.chol.solve(Eigen::VectorXd(m.train_z.array() - m.mean_const));
  return m;
}

}  // namespace iuq::gp
