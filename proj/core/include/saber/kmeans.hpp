#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace saber {

using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct KMeansResult {
  std::vector<int> assignments;    // cluster of every point
  PointMatrix centroids;           // k×d
  std::vector<double> inertia;     // after every assignment step
  int iterations = 0;
  bool converged = false;
};

// Lloyd's algorithm with k-means++ seeding. Stops when assignments repeat
// or after `max_iters`. An emptied cluster takes the point farthest from the
// centroid of the currently largest cluster. Ties go to the lower index.
KMeansResult kmeans(const PointMatrix& points, int k, std::uint64_t seed, int max_iters = 100);

}  // namespace saber
