#include "saber/kmeans.hpp"

#include <limits>
#include <random>

#include <fmt/format.h>

#include "saber/error.hpp"

namespace saber {

namespace {

int nearest(const PointMatrix& centroids, const Eigen::Ref<const Eigen::RowVectorXd>& p,
            double& dist) {
  int best = 0;
  dist = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double dd = (centroids.row(c) - p).squaredNorm();
    if (dd < dist) {
      dist = dd;
      best = static_cast<int>(c);
    }
  }
  return best;
}

PointMatrix seed_plus_plus(const PointMatrix& points, int k, std::mt19937_64& rng) {
  const Eigen::Index n = points.rows();
  PointMatrix c(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  c.row(0) = points.row(first(rng));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    d2[static_cast<std::size_t>(i)] = (points.row(i) - c.row(0)).squaredNorm();
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int j = 1; j < k; ++j) {
    double total = 0.0;
    for (double v : d2) total += v;
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = unit(rng) * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        u -= d2[static_cast<std::size_t>(i)];
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);
    }
    c.row(j) = points.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& v = d2[static_cast<std::size_t>(i)];
      v = std::min(v, (points.row(i) - c.row(j)).squaredNorm());
    }
  }
  return c;
}

}  // namespace

KMeansResult kmeans(const PointMatrix& points, int k, std::uint64_t seed, int max_iters) {
  const Eigen::Index n = points.rows();
  if (k < 1) throw InvalidArgument("kmeans: k must be positive");
  if (n < k) throw InvalidArgument(fmt::format("kmeans: {} points for k={}", n, k));
  std::mt19937_64 rng(seed);
  KMeansResult res;
  res.centroids = seed_plus_plus(points, k, rng);
  res.assignments.assign(static_cast<std::size_t>(n), -1);

  for (int it = 0; it < max_iters; ++it) {
    bool changed = false;
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double dist;
      const int c = nearest(res.centroids, points.row(i), dist);
      inertia += dist;
      if (c != res.assignments[static_cast<std::size_t>(i)]) {
        res.assignments[static_cast<std::size_t>(i)] = c;
        changed = true;
      }
    }
    res.inertia.push_back(inertia);
    res.iterations = it + 1;
    if (!changed) {
      res.converged = true;
      break;
    }

    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    PointMatrix sums = PointMatrix::Zero(k, points.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = res.assignments[static_cast<std::size_t>(i)];
      sums.row(c) += points.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        res.centroids.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
      }
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      int largest = 0;
      for (int o = 1; o < k; ++o) {
        if (counts[static_cast<std::size_t>(o)] > counts[static_cast<std::size_t>(largest)]) {
          largest = o;
        }
      }
      Eigen::Index far = -1;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (res.assignments[static_cast<std::size_t>(i)] != largest) continue;
        const double dd = (points.row(i) - res.centroids.row(largest)).squaredNorm();
        if (dd > far_d) {
          far_d = dd;
          far = i;
        }
      }
      res.assignments[static_cast<std::size_t>(far)] = c;
      --counts[static_cast<std::size_t>(largest)];
      counts[static_cast<std::size_t>(c)] = 1;
      res.centroids.row(c) = points.row(far);
      // Recompute the donor's mean without the stolen point.
      Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(points.cols());
      for (Eigen::Index i = 0; i < n; ++i) {
        if (res.assignments[static_cast<std::size_t>(i)] == largest) s += points.row(i);
      }
      res.centroids.row(largest) = s / counts[static_cast<std::size_t>(largest)];
    }
  }
  return res;
}

}  // namespace saber
