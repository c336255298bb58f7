#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace icf {

// Granularity groups used when weighting the training mixture. Sub-hourly
// data shares the hourly bucket.
enum class Granularity { kHourly, kDaily, kWeekly, kMonthly, kSynthetic };

inline Granularity granularity_from_string(const std::string& s) {
  if (s == "hourly" || s == "sub-hourly" || s == "subhourly") return Granularity::kHourly;
  if (s == "daily") return Granularity::kDaily;
  if (s == "weekly") return Granularity::kWeekly;
  if (s == "monthly") return Granularity::kMonthly;
  if (s == "synthetic") return Granularity::kSynthetic;
  throw std::invalid_argument("unknown granularity '" + s + "'");
}

inline const char* granularity_to_string(Granularity g) {
  switch (g) {
    case Granularity::kHourly: return "hourly";
    case Granularity::kDaily: return "daily";
    case Granularity::kWeekly: return "weekly";
    case Granularity::kMonthly: return "monthly";
    case Granularity::kSynthetic: return "synthetic";
  }
  return "synthetic";
}

// A named univariate real-valued sequence.
struct TimeSeries {
  std::string id;
  Granularity granularity = Granularity::kSynthetic;
  std::vector<double> values;

  std::size_t length() const { return values.size(); }
};

}  // namespace icf
