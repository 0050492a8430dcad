#pragma once

#include <vector>

namespace rnclab {

// 1-based ranks with ties assigned the average rank of their run.
std::vector<double> average_ranks(const std::vector<double>& v);

// Spearman rank correlation with average ranks for ties. Returns 0 when
// either side has zero rank variance; always in [-1, 1].
double spearman(const std::vector<double>& a, const std::vector<double>& b);

double median(std::vector<double> v);  // even length: mean of the middle two

}  // namespace rnclab
