#include "rpf/reduce.hpp"

#include <vector>

namespace rpf {

double tree_sum(std::span<const double> values) {
  if (values.empty()) return 0.0;
  std::vector<double> level;
  level.reserve(values.size() / kLeafSize + 1);
  for (std::size_t begin = 0; begin < values.size(); begin += kLeafSize) {
    const std::size_t end = std::min(values.size(), begin + kLeafSize);
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += values[i];
    level.push_back(s);
  }
  while (level.size() > 1) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < level.size(); i += 2) {
      level[out++] = (i + 1 < level.size()) ? level[i] + level[i + 1] : level[i];
    }
    level.resize(out);
  }
  return level.front();
}

}  // namespace rpf
