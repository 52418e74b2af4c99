#include "spcn/percentile.hpp"

#include <algorithm>
#include <cmath>

#include "spcn/error.hpp"

namespace spcn {

double percentile(std::vector<double> sample, double p) {
  if (sample.empty()) throw Error(ErrorCode::invalid_argument, "percentile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::invalid_argument, "percentile rank outside [0, 1]");
  const double rank = p * static_cast<double>(sample.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  auto lo_it = sample.begin() + static_cast<std::ptrdiff_t>(lo);
  std::nth_element(sample.begin(), lo_it, sample.end());
  const double lo_value = *lo_it;
  if (lo + 1 >= sample.size()) return lo_value;
  const double hi_value = *std::min_element(lo_it + 1, sample.end());
  return lo_value + (rank - static_cast<double>(lo)) * (hi_value - lo_value);
}

double median(std::vector<double> sample) {
  if (sample.empty()) throw Error(ErrorCode::invalid_argument, "median of an empty sample");
  const std::size_t n = sample.size();
  auto mid = sample.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(sample.begin(), mid, sample.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(sample.begin(), mid);
  return (lower + upper) / 2.0;
}

}  // namespace spcn
