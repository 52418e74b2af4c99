#pragma once

#include <span>
#include <vector>

namespace spcn {

// Linear interpolation between closest ranks: rank = p * (n - 1), zero-based,
// on the sorted sample. p in [0, 1]. Takes the sample by value because it is
// partially reordered. Throws Error{invalid_argument} on an empty sample.
double percentile(std::vector<double> sample, double p);

// Median with the even-count convention of averaging the middle pair.
double median(std::vector<double> sample);

}  // namespace spcn
