#pragma once

#include <span>
#include <vector>

namespace saber {

double dot(std::span<const float> a, std::span<const float> b);
double norm(std::span<const float> a);
double squared_distance(std::span<const float> a, std::span<const float> b);

// a·b / (‖a‖‖b‖). Throws InvalidArgument on zero norm or mismatched dims.
double cosine_sim(std::span<const float> a, std::span<const float> b);

std::vector<float> concat(std::span<const float> a, std::span<const float> b);
std::vector<float> concat(std::span<const float> a, std::span<const float> b,
                          std::span<const float> c);

}  // namespace saber
