#pragma once

#include <cstdint>

#include "saber/store.hpp"

namespace saber::synth {

// Planted structure: every record belongs to a task and to one of several
// families inside it. Image vectors carry a weak task signal and a strong
// family signal; question vectors carry a strong task signal; result and
// question+result vectors are dominated by the family, so two ICDs from the
// same family are redundant for one another.
struct SynthConfig {
  int demos = 320;
  int queries = 32;  // held-out, role "query"
  int tasks = 4;
  int families = 6;  // per task
  int dim = 128;
  std::uint64_t seed = 0;
  double img_task = 0.5;
  double img_family = 1.0;
  double img_noise = 0.6;
  double q_task = 1.0;
  double q_family = 0.7;
  double q_noise = 0.5;
  double r_noise = 0.5;
  double qr_q = 0.6;
  double qr_r = 0.8;
  double qr_noise = 0.3;
  void validate() const;
};

Store generate(const SynthConfig& cfg);

}  // namespace saber::synth
