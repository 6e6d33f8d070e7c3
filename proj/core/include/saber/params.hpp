#pragma once

#include <deque>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "saber/autodiff.hpp"

namespace saber {

// Named learnable tensors in creation order. Addresses are stable, so tapes
// may hold pointers into the set across a forward/backward pair.
class ParamSet {
 public:
  ad::Parameter& add(const std::string& name, ad::Mat value, bool decay = true);
  ad::Parameter& get(const std::string& name);
  const ad::Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;
  ad::Parameter& at(std::size_t i) { return params_[i]; }
  const ad::Parameter& at(std::size_t i) const { return params_[i]; }

  void zero_grad();
  bool all_finite() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<ad::Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

ad::Mat normal_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                      double stddev);

// Converts a stored f32 vector into a 1×d row.
ad::Mat to_row(const std::vector<float>& v);

}  // namespace saber
