#include "cmg/errors.hpp"

namespace cmg {

Error::Error(std::string_view category, const std::string& message)
    : std::runtime_error(std::string(category) + ": " + message), category_(category) {}

}  // namespace cmg

#include <cmath>
#include <cstdio>

namespace cmg {

bool LossBreakdown::all_finite() const { return first_non_finite().empty(); }

std::string LossBreakdown::first_non_finite() const {
  if (!std::isfinite(adv_1)) return "adv_1";
  if (!std::isfinite(adv_2)) return "adv_2";
  if (!std::isfinite(cyc)) return "cyc";
  if (!std::isfinite(cPercep)) return "cPercep";
  if (!std::isfinite(cStyle)) return "cStyle";
  if (!std::isfinite(total)) return "total";
  return {};
}

std::string breakdown_csv_header() { return "step,adv_1,adv_2,cyc,cPercep,cStyle,total"; }

std::string breakdown_csv_row(int64_t step, const LossBreakdown& b) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", static_cast<long long>(step),
                b.adv_1, b.adv_2, b.cyc, b.cPercep, b.cStyle, b.total);
  return buf;
}

}  // namespace cmg
