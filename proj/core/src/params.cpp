#include "saber/params.hpp"

#include "saber/error.hpp"

namespace saber {

ad::Parameter& ParamSet::add(const std::string& name, ad::Mat value, bool decay) {
  if (index_.count(name) != 0) throw InvalidArgument("duplicate parameter '" + name + "'");
  ad::Parameter p;
  p.name = name;
  p.grad = ad::Mat::Zero(value.rows(), value.cols());
  p.value = std::move(value);
  p.decay = decay;
  index_.emplace(name, params_.size());
  params_.push_back(std::move(p));
  return params_.back();
}

ad::Parameter& ParamSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return params_[it->second];
}

const ad::Parameter& ParamSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return params_[it->second];
}

std::size_t ParamSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

bool ParamSet::all_finite() const {
  for (const auto& p : params_) {
    if (!p.value.allFinite()) return false;
  }
  return true;
}

ad::Mat normal_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                      double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  ad::Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

ad::Mat to_row(const std::vector<float>& v) {
  ad::Mat m(1, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = v[i];
  return m;
}

}  // namespace saber
