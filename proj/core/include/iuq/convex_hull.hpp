#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace iuq::tsa {

/// One simplicial facet of a d-dimensional convex hull. The outward normal is
/// unnormalized; interior points satisfy normal . x < offset.
struct HullFacet {
  std::vector<int> vertices;  // d point indices
  Eigen::VectorXd normal;
  double offset = 0.0;
};

/// Incremental (beneath-beyond) convex hull in small dimension. Points are
/// inserted one at a time and the enclosed volume is accumulated as the sum
/// of pyramid volumes over facets visible from each new point. Facets are
/// kept simplicial; coplanar insertions contribute zero volume and are
/// absorbed without facet merging.
class IncrementalHull {
 public:
  explicit IncrementalHull(int dim);

  /// Adds a point; returns its internal index.
  int add_point(const Eigen::VectorXd& p);

  /// True once an affinely independent (dim+1)-point simplex has been found.
  bool initialized() const { return initialized_; }

  /// Hull volume; 0 while the point set is not full-dimensional.
  double volume() const { return volume_; }

  /// Volume increase if p were added, without modifying the hull.
  double added_volume_if(const Eigen::VectorXd& p) const;

  /// Inside-or-on test with absolute distance tolerance (coordinates are
  /// expected to be O(1), e.g. normalized to a unit cube).
  bool contains(const Eigen::VectorXd& p, double tol = 1e-9) const;

  /// Recomputes the volume from scratch (pyramids from the interior point).
  double recomputed_volume() const;

  const std::vector<HullFacet>& facets() const { return facets_; }
  const std::vector<Eigen::VectorXd>& points() const { return pts_; }

 private:
  void try_initialize();
  void insert(int idx);
  HullFacet make_facet(std::vector<int> vertices) const;
  double pyramid_volume(const HullFacet& f, const Eigen::VectorXd& apex) const;
  double signed_distance(const HullFacet& f, const Eigen::VectorXd& p) const;

  int dim_;
  bool initialized_ = false;
  double volume_ = 0.0;
  std::vector<Eigen::VectorXd> pts_;
  std::vector<int> pending_;
  Eigen::VectorXd interior_;
  std::vector<HullFacet> facets_;
};

struct HullVolume {
  double volume = 0.0;
  bool degenerate = false;
};

/// Volume of the convex hull of an n x r point set. Exact (incremental hull
/// with simplicial decomposition) for r <= 6; seeded hit-count Monte Carlo
/// with 1e6 samples above that. Affinely degenerate inputs give volume 0
/// with the degenerate flag set.
HullVolume convex_hull_volume(const Eigen::MatrixXd& points,
                              std::uint64_t mc_seed = 20120639ULL);

}  // namespace iuq::tsa
