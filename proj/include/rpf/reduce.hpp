#pragma once

#include <cstddef>
#include <span>

namespace rpf {

// Sum with a fixed pairwise tree shape: leaves of kLeafSize elements are
// summed left to right, then partial sums are combined in pairs. The result
// depends only on the input order, never on how the work is scheduled.
inline constexpr std::size_t kLeafSize = 16;

double tree_sum(std::span<const double> values);

}  // namespace rpf
