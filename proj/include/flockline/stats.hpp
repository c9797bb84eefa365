#pragma once

#include <functional>
#include <vector>

namespace flockline {

double mean(const std::vector<double>& v);
double variance(const std::vector<double>& v);  // unbiased
double std_error(const std::vector<double>& v);
double median(std::vector<double> v);
double rms(const std::vector<double>& v);

// P(K > lambda) for the Kolmogorov distribution.
double kolmogorov_survival(double lambda);

struct KsResult {
  double statistic;
  double p_value;
};

KsResult ks_one_sample(std::vector<double> data, const std::function<double(double)>& cdf);
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

}  // namespace flockline
