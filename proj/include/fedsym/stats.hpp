#pragma once

#include <span>
#include <vector>

namespace fedsym::stats {

double mean(std::span<const double> xs);

/// Population standard deviation (divides by n).
double population_std(std::span<const double> xs);

/// Ranks starting at 1; tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> xs);

/// Spearman rank correlation (Pearson correlation of average ranks).
/// Returns 0 when either side is constant.
double spearman(std::span<const double> xs, std::span<const double> ys);

}  // namespace fedsym::stats
