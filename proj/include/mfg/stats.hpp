#ifndef MFG_STATS_HPP
#define MFG_STATS_HPP

#include <span>
#include <vector>

namespace mfg {

/// Ordinary least squares y = slope x + intercept.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

LineFit fit_line(std::span<const double> x, std::span<const double> y);

/// Fit of log y against log x; all inputs must be positive.
LineFit loglog_fit(std::span<const double> x, std::span<const double> y);

/// Mean and standard error of the mean.
struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

MeanEstimate mean_and_error(std::span<const double> samples);

}  // namespace mfg

#endif  // MFG_STATS_HPP
