#include "saber/vec.hpp"

#include <cmath>
#include <string>

#include "saber/error.hpp"

namespace saber {

namespace {

void require_same_dim(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("vector dimension mismatch: " +
                          std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  }
}

}  // namespace

double dot(std::span<const float> a, std::span<const float> b) {
  require_same_dim(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

double norm(std::span<const float> a) { return std::sqrt(dot(a, a)); }

double squared_distance(std::span<const float> a, std::span<const float> b) {
  require_same_dim(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += diff * diff;
  }
  return acc;
}

double cosine_sim(std::span<const float> a, std::span<const float> b) {
  require_same_dim(a, b);
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) {
    throw InvalidArgument("cosine_sim: zero-norm vector");
  }
  const double c = dot(a, b) / (na * nb);
  // Rounding can push |c| a hair past 1.
  return std::fmax(-1.0, std::fmin(1.0, c));
}

std::vector<float> concat(std::span<const float> a, std::span<const float> b) {
  std::vector<float> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

std::vector<float> concat(std::span<const float> a, std::span<const float> b,
                          std::span<const float> c) {
  std::vector<float> out = concat(a, b);
  out.insert(out.end(), c.begin(), c.end());
  return out;
}

}  // namespace saber
