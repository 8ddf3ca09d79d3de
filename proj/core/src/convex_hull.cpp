#include "iuq/convex_hull.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <string>

#include "iuq/common.hpp"

namespace iuq::tsa {

namespace {

constexpr double kVisibleEps = 1e-10;   // distance threshold for visibility
constexpr double kIndepTol = 1e-9;      // affine independence threshold

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

}  // namespace

IncrementalHull::IncrementalHull(int dim) : dim_(dim) {
  if (dim < 1) throw DataError("IncrementalHull: dimension must be >= 1");
}

HullFacet IncrementalHull::make_facet(std::vector<int> vertices) const {
  HullFacet f;
  f.vertices = std::move(vertices);
  const auto& w0 = pts_[static_cast<std::size_t>(f.vertices[0])];

  // Generalized cross product of the facet's edge vectors via cofactor
  // expansion; orthogonal to every row of D.
  Eigen::MatrixXd D(dim_ - 1, dim_);
  for (int i = 1; i < dim_; ++i)
    D.row(i - 1) = (pts_[static_cast<std::size_t>(f.vertices[static_cast<std::size_t>(i)])] - w0).transpose();

  Eigen::VectorXd n(dim_);
  if (dim_ == 1) {
    n(0) = 1.0;
  } else {
    Eigen::MatrixXd minor(dim_ - 1, dim_ - 1);
    for (int c = 0; c < dim_; ++c) {
      int mc = 0;
      for (int cc = 0; cc < dim_; ++cc) {
        if (cc == c) continue;
        minor.col(mc++) = D.col(cc);
      }
      const double det = minor.determinant();
      n(c) = ((c % 2) == 0) ? det : -det;
    }
  }

  // Orient outward: the interior reference point lies on the negative side.
  if (n.dot(interior_ - w0) > 0) n = -n;
  f.normal = n;
  f.offset = n.dot(w0);
  return f;
}

double IncrementalHull::signed_distance(const HullFacet& f,
                                        const Eigen::VectorXd& p) const {
  const double nn = f.normal.norm();
  if (nn == 0.0) return -std::numeric_limits<double>::infinity();
  return (f.normal.dot(p) - f.offset) / nn;
}

double IncrementalHull::pyramid_volume(const HullFacet& f,
                                       const Eigen::VectorXd& apex) const {
  const auto& w0 = pts_[static_cast<std::size_t>(f.vertices[0])];
  Eigen::MatrixXd M(dim_, dim_);
  for (int i = 1; i < dim_; ++i)
    M.col(i - 1) = pts_[static_cast<std::size_t>(f.vertices[static_cast<std::size_t>(i)])] - w0;
  M.col(dim_ - 1) = apex - w0;
  return std::abs(M.determinant()) / factorial(dim_);
}

int IncrementalHull::add_point(const Eigen::VectorXd& p) {
  if (p.size() != dim_)
    throw DataError("IncrementalHull: point dimension mismatch");
  const int idx = static_cast<int>(pts_.size());
  pts_.push_back(p);
  if (!initialized_) {
    pending_.push_back(idx);
    try_initialize();
  } else {
    insert(idx);
  }
  return idx;
}

void IncrementalHull::try_initialize() {
  if (static_cast<int>(pending_.size()) < dim_ + 1) return;

  // Greedy well-conditioned simplex: start from the most distant pair, then
  // repeatedly take the point farthest from the current affine hull.
  const std::size_t np = pending_.size();
  std::size_t a = 0, b = 0;
  double best = 0.0;
  for (std::size_t i = 0; i < np; ++i)
    for (std::size_t j = i + 1; j < np; ++j) {
      const double d = (pts_[static_cast<std::size_t>(pending_[i])] -
                        pts_[static_cast<std::size_t>(pending_[j])])
                           .squaredNorm();
      if (d > best) {
        best = d;
        a = i;
        b = j;
      }
    }
  if (std::sqrt(best) < kIndepTol) return;  // all points coincide

  std::vector<int> simplex = {pending_[a], pending_[b]};
  Eigen::MatrixXd basis(dim_, dim_);  // orthonormal directions, grown column-wise
  const auto& v0 = pts_[static_cast<std::size_t>(simplex[0])];
  basis.col(0) = (pts_[static_cast<std::size_t>(simplex[1])] - v0).normalized();
  int rank = 1;

  while (rank < dim_) {
    double far = 0.0;
    int far_idx = -1;
    Eigen::VectorXd far_res;
    for (int idx : pending_) {
      if (std::find(simplex.begin(), simplex.end(), idx) != simplex.end())
        continue;
      Eigen::VectorXd r = pts_[static_cast<std::size_t>(idx)] - v0;
      r -= basis.leftCols(rank) * (basis.leftCols(rank).transpose() * r);
      const double rn = r.norm();
      if (rn > far) {
        far = rn;
        far_idx = idx;
        far_res = r;
      }
    }
    if (far_idx < 0 || far < kIndepTol) return;  // not full-dimensional yet
    simplex.push_back(far_idx);
    basis.col(rank) = far_res / far;
    ++rank;
  }

  interior_ = Eigen::VectorXd::Zero(dim_);
  for (int idx : simplex) interior_ += pts_[static_cast<std::size_t>(idx)];
  interior_ /= static_cast<double>(simplex.size());

  facets_.clear();
  for (std::size_t omit = 0; omit < simplex.size(); ++omit) {
    std::vector<int> verts;
    for (std::size_t i = 0; i < simplex.size(); ++i)
      if (i != omit) verts.push_back(simplex[i]);
    facets_.push_back(make_facet(std::move(verts)));
  }

  Eigen::MatrixXd M(dim_, dim_);
  for (int i = 1; i <= dim_; ++i)
    M.col(i - 1) = pts_[static_cast<std::size_t>(simplex[static_cast<std::size_t>(i)])] -
                   pts_[static_cast<std::size_t>(simplex[0])];
  volume_ = std::abs(M.determinant()) / factorial(dim_);
  initialized_ = true;

  auto leftovers = pending_;
  pending_.clear();
  for (int idx : leftovers)
    if (std::find(simplex.begin(), simplex.end(), idx) == simplex.end())
      insert(idx);
}

void IncrementalHull::insert(int idx) {
  const auto& p = pts_[static_cast<std::size_t>(idx)];

  std::vector<std::size_t> visible;
  for (std::size_t fi = 0; fi < facets_.size(); ++fi)
    if (signed_distance(facets_[fi], p) > kVisibleEps) visible.push_back(fi);
  if (visible.empty()) return;  // inside or on the hull

  for (std::size_t fi : visible) volume_ += pyramid_volume(facets_[fi], p);

  // Horizon ridges appear exactly once among the visible facets.
  std::map<std::vector<int>, int> ridge_count;
  for (std::size_t fi : visible) {
    const auto& verts = facets_[fi].vertices;
    for (std::size_t omit = 0; omit < verts.size(); ++omit) {
      std::vector<int> ridge;
      for (std::size_t i = 0; i < verts.size(); ++i)
        if (i != omit) ridge.push_back(verts[i]);
      std::sort(ridge.begin(), ridge.end());
      ++ridge_count[ridge];
    }
  }

  std::vector<HullFacet> next;
  next.reserve(facets_.size());
  std::vector<bool> is_visible(facets_.size(), false);
  for (std::size_t fi : visible) is_visible[fi] = true;
  for (std::size_t fi = 0; fi < facets_.size(); ++fi)
    if (!is_visible[fi]) next.push_back(std::move(facets_[fi]));

  for (auto& [ridge, count] : ridge_count) {
    if (count != 1) continue;
    std::vector<int> verts = ridge;
    verts.push_back(idx);
    next.push_back(make_facet(std::move(verts)));
  }
  facets_ = std::move(next);
}

double IncrementalHull::added_volume_if(const Eigen::VectorXd& p) const {
  if (!initialized_) return 0.0;
  double dv = 0.0;
  for (const auto& f : facets_)
    if (signed_distance(f, p) > kVisibleEps) dv += pyramid_volume(f, p);
  return dv;
}

bool IncrementalHull::contains(const Eigen::VectorXd& p, double tol) const {
  if (!initialized_) return false;
  for (const auto& f : facets_)
    if (signed_distance(f, p) > tol) return false;
  return true;
}

double IncrementalHull::recomputed_volume() const {
  if (!initialized_) return 0.0;
  double v = 0.0;
  for (const auto& f : facets_) v += pyramid_volume(f, interior_);
  return v;
}

HullVolume convex_hull_volume(const Eigen::MatrixXd& points,
                              std::uint64_t mc_seed) {
  const int n = static_cast<int>(points.rows());
  const int r = static_cast<int>(points.cols());
  if (n == 0 || r < 1) return {0.0, true};

  if (r == 1) {
    const double lo = points.col(0).minCoeff();
    const double hi = points.col(0).maxCoeff();
    const double v = hi - lo;
    return {v, v < kIndepTol};
  }

  IncrementalHull hull(r);
  for (int i = 0; i < n; ++i) hull.add_point(points.row(i).transpose());
  if (!hull.initialized()) return {0.0, true};

  if (r <= 6) return {hull.volume(), false};

  // High dimension: hit-count Monte Carlo over the bounding box, using the
  // hull facets for the inside test.
  Eigen::VectorXd lo = points.colwise().minCoeff().transpose();
  Eigen::VectorXd hi = points.colwise().maxCoeff().transpose();
  double box = 1.0;
  for (int k = 0; k < r; ++k) box *= hi(k) - lo(k);

  std::mt19937_64 rng(mc_seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int n_samples = 1000000;
  int hits = 0;
  Eigen::VectorXd s(r);
  for (int t = 0; t < n_samples; ++t) {
    for (int k = 0; k < r; ++k) s(k) = lo(k) + unif(rng) * (hi(k) - lo(k));
    if (hull.contains(s, 0.0)) ++hits;
  }
  return {box * static_cast<double>(hits) / n_samples, false};
}

}  // namespace iuq::tsa
