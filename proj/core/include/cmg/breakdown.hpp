#pragma once

#include <cstdint>
#include <string>

namespace cmg {

// Per-step values of every objective term. For a generator step adv_1/adv_2
// are the generator-form adversarial losses.
struct LossBreakdown {
  double adv_1 = 0.0;
  double adv_2 = 0.0;
  double cyc = 0.0;
  double cPercep = 0.0;
  double cStyle = 0.0;
  double total = 0.0;

  bool all_finite() const;
  // First non-finite term name, or empty.
  std::string first_non_finite() const;
};

std::string breakdown_csv_header();
std::string breakdown_csv_row(int64_t step, const LossBreakdown& b);

}  // namespace cmg
