#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "saber/dataset_io.hpp"
#include "saber/scorer.hpp"

namespace saber::metrics {

// Lowercase, trim, and collapse internal whitespace runs to one space.
std::string normalize_answer(const std::string& s);

// min(1, 3·matches/10) where matches counts ground truths equal to `answer`
// after normalization. Throws InvalidArgument on an empty list.
double vqa_accuracy(const std::string& answer, std::span<const std::string> ground_truths);

struct GapResult {
  double gap = 0.0;
  std::vector<double> per_query;  // score(S) − mean score(S′)
};

// S′ replaces the ICD at position a with the one at position b ≠ a. With
// trials > 0 each query draws that many seeded (a, b) pairs; trials == 0
// averages over all L·(L−1) ordered pairs.
GapResult gap_metric(std::span<const SequenceExample> sequences, Scorer& scorer,
                     std::uint64_t seed, int trials);

// Population variance. Throws InvalidArgument on empty input.
double variance_metric(std::span<const double> scores);

}  // namespace saber::metrics
