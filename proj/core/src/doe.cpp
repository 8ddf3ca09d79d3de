#include "iuq/doe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "iuq/common.hpp"

namespace iuq::doe {

namespace {

constexpr double kBoundTol = 1e-12;

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  // splitmix-style stream separation so restarts are independent
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return std::mt19937_64(z ^ (z >> 31));
}

}  // namespace

Eigen::MatrixXd DesignMatrix::unit() const {
  return normalize_to_unit_cube(points, bounds);
}

Eigen::MatrixXd normalize_to_unit_cube(
    const Eigen::MatrixXd& points,
    const std::vector<std::pair<double, double>>& bounds) {
  const Eigen::Index d = points.cols();
  if (static_cast<Eigen::Index>(bounds.size()) != d)
    throw DataError("normalize_to_unit_cube: have " +
                    std::to_string(bounds.size()) + " bounds for " +
                    std::to_string(d) + " dimensions");
  Eigen::MatrixXd u(points.rows(), d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const auto [lo, hi] = bounds[static_cast<std::size_t>(k)];
    if (!(lo < hi))
      throw DataError("normalize_to_unit_cube: degenerate bounds in dimension " +
                      std::to_string(k) + " (lower " + std::to_string(lo) +
                      " >= upper " + std::to_string(hi) + ")");
    const double w = hi - lo;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      const double x = points(i, k);
      if (x < lo - kBoundTol * std::max(1.0, std::abs(lo)) ||
          x > hi + kBoundTol * std::max(1.0, std::abs(hi)))
        throw DataError("normalize_to_unit_cube: point " + std::to_string(i) +
                        " outside bounds in dimension " + std::to_string(k));
      u(i, k) = std::clamp((x - lo) / w, 0.0, 1.0);
    }
  }
  return u;
}

double centered_l2_discrepancy(const Eigen::MatrixXd& u) {
  const Eigen::Index n = u.rows(), d = u.cols();
  if (n == 0) throw DataError("centered_l2_discrepancy: empty design");

  double term1 = std::pow(13.0 / 12.0, static_cast<double>(d));

  double sum_single = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double prod = 1.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      const double a = std::abs(u(i, k) - 0.5);
      prod *= 1.0 + 0.5 * a - 0.5 * a * a;
    }
    sum_single += prod;
  }

  double sum_pair = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double prod = 1.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double ai = std::abs(u(i, k) - 0.5);
        const double aj = std::abs(u(j, k) - 0.5);
        prod *= 1.0 + 0.5 * ai + 0.5 * aj - 0.5 * std::abs(u(i, k) - u(j, k));
      }
      sum_pair += prod;
    }
  }

  const double nn = static_cast<double>(n);
  return term1 - (2.0 / nn) * sum_single + sum_pair / (nn * nn);
}

double wraparound_l2_discrepancy(const Eigen::MatrixXd& u) {
  const Eigen::Index n = u.rows(), d = u.cols();
  if (n == 0) throw DataError("wraparound_l2_discrepancy: empty design");

  double sum_pair = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double prod = 1.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double a = std::abs(u(i, k) - u(j, k));
        prod *= 1.5 - a * (1.0 - a);
      }
      sum_pair += prod;
    }
  }

  const double nn = static_cast<double>(n);
  return std::pow(4.0 / 3.0, static_cast<double>(d)) + sum_pair / (nn * nn);
}

Eigen::MatrixXd random_lhs(int n, int d, std::uint64_t seed, bool jitter) {
  if (n < 1 || d < 1) throw DataError("random_lhs: need n >= 1 and d >= 1");
  auto rng = make_rng(seed, 0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd pts(n, d);
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int k = 0; k < d; ++k) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int i = 0; i < n; ++i) {
      const double offset = jitter ? unif(rng) : 0.5;
      pts(i, k) = (perm[static_cast<std::size_t>(i)] + offset) / n;
    }
  }
  return pts;
}

double min_pairwise_distance(const Eigen::MatrixXd& pts) {
  const Eigen::Index n = pts.rows();
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      best = std::min(best, (pts.row(i) - pts.row(j)).squaredNorm());
  return std::sqrt(best);
}

bool is_latin_hypercube(const Eigen::MatrixXd& pts) {
  const Eigen::Index n = pts.rows(), d = pts.cols();
  std::vector<bool> seen(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < d; ++k) {
    std::fill(seen.begin(), seen.end(), false);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = pts(i, k);
      if (v < 0.0 || v >= 1.0 + 1e-15) return false;
      auto stratum = static_cast<Eigen::Index>(v * static_cast<double>(n));
      if (stratum == n) stratum = n - 1;  // v == 1.0 exactly
      if (seen[static_cast<std::size_t>(stratum)]) return false;
      seen[static_cast<std::size_t>(stratum)] = true;
    }
  }
  return true;
}

namespace {

// Greedy improvement: swapping two entries of one column keeps the Latin
// property; accept a swap when it enlarges the minimum pairwise distance.
// Each pass costs O(n^3 d), so large designs rely on restarts alone.
constexpr Eigen::Index kMaxSwapPoints = 150;

void swap_improve_design(Eigen::MatrixXd& pts, std::mt19937_64& rng) {
  const Eigen::Index n = pts.rows(), d = pts.cols();
  if (n < 2 || n > kMaxSwapPoints) return;

  Eigen::MatrixXd dist2(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    dist2(i, i) = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = (pts.row(i) - pts.row(j)).squaredNorm();
      dist2(i, j) = dist2(j, i) = v;
    }
  }
  auto global_min = [&]() {
    double m = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) m = std::min(m, dist2(i, j));
    return m;
  };
  double current = global_min();

  std::vector<std::array<Eigen::Index, 3>> moves;
  for (Eigen::Index k = 0; k < d; ++k)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) moves.push_back({k, i, j});

  const int max_passes = 16;
  for (int pass = 0; pass < max_passes; ++pass) {
    std::shuffle(moves.begin(), moves.end(), rng);
    bool improved = false;
    for (const auto& [k, i, j] : moves) {
      const double xi = pts(i, k), xj = pts(j, k);
      if (xi == xj) continue;
      // distances only change for pairs touching rows i or j
      double new_min_touched = std::numeric_limits<double>::infinity();
      bool worse = false;
      for (Eigen::Index t = 0; t < n && !worse; ++t) {
        if (t == i || t == j) continue;
        const double dik = pts(t, k) - xi, djk = pts(t, k) - xj;
        const double d_it = dist2(i, t) - dik * dik + djk * djk;
        const double d_jt = dist2(j, t) - djk * djk + dik * dik;
        new_min_touched = std::min({new_min_touched, d_it, d_jt});
        if (new_min_touched <= current) worse = true;
      }
      if (worse || new_min_touched <= current) continue;
      // the i-j pair itself is unchanged by swapping one shared column
      std::swap(pts(i, k), pts(j, k));
      for (Eigen::Index t = 0; t < n; ++t) {
        if (t == i || t == j) continue;
        const double dik = pts(t, k) - xj, djk = pts(t, k) - xi;
        // recompute exactly to avoid drift
        dist2(i, t) = dist2(t, i) = dist2(i, t) - (pts(t, k) - xi) * (pts(t, k) - xi) + dik * dik;
        dist2(j, t) = dist2(t, j) = dist2(j, t) - (pts(t, k) - xj) * (pts(t, k) - xj) + djk * djk;
      }
      current = global_min();
      improved = true;
    }
    if (!improved) break;
  }
}

}  // namespace

Eigen::MatrixXd maximin_lhs(int n, int d, std::uint64_t seed,
                            const LhsOptions& opts) {
  if (n < 2 || d < 1) throw DataError("maximin_lhs: need n >= 2 and d >= 1");
  const int restarts = std::max(1, opts.n_restarts);

  // Restart 0 shares random_lhs's stream, so the optimized design can never
  // score below the plain draw for the same seed.
  std::vector<Eigen::MatrixXd> candidates(static_cast<std::size_t>(restarts));
  std::vector<double> scores(static_cast<std::size_t>(restarts));
  parallel_for(static_cast<std::size_t>(restarts), [&](std::size_t s) {
    auto rng = make_rng(seed, s);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::MatrixXd pts(n, d);
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int k = 0; k < d; ++k) {
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      for (int i = 0; i < n; ++i) {
        const double offset = opts.jitter ? unif(rng) : 0.5;
        pts(i, k) = (perm[static_cast<std::size_t>(i)] + offset) / n;
      }
    }
    if (opts.swap_improve) swap_improve_design(pts, rng);
    scores[s] = min_pairwise_distance(pts);
    candidates[s] = std::move(pts);
  });

  std::size_t best = 0;
  for (std::size_t s = 1; s < scores.size(); ++s)
    if (scores[s] > scores[best]) best = s;
  return candidates[best];
}

}  // namespace iuq::doe
