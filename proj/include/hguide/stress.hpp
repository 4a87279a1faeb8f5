// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hguide/guidance.hpp"
#include "hguide/types.hpp"

namespace hguide {

// proleptic Gregorian day arithmetic (days since 1970-01-01)
int days_from_civil(int y, int m, int d);
void civil_from_days(int z, int* y, int* m, int* d);
int weekday_from_days(int z);  // 0 = Monday .. 6 = Sunday
std::string iso_from_days(int z);
int days_from_iso(const std::string& iso);

// Preprocessing record, retained so generated standardized returns can be
// mapped back to raw units.
struct StressTransform {
  double winsor_fraction = 0.005;
  Vec cap_lo, cap_hi;  // per-ticker winsor caps, raw units
  Mat weekday_mean;    // tickers x 7, zero for unobserved weekdays
  Vec long_run_std;    // per ticker
  Vec mean_shift;      // frequency-weighted weekday mean, used when no date is known

  // weekday < 0 falls back to the recorded mean shift
  double destandardize(double x, int ticker, int weekday) const;
};

struct ReturnsPanel {
  std::vector<std::string> tickers;
  std::vector<int> epoch_days;  // per row
  std::vector<int> weekday;     // per row, 0 = Monday
  Mat raw;                      // rows x tickers, winsorized raw log-returns
  Mat standardized;             // rows x tickers
  StressTransform transform;

  long rows() const { return standardized.rows(); }
  int n_tickers() const { return static_cast<int>(tickers.size()); }
  void validate() const;
};

// CSV header: date,<ticker>... with ISO dates and float log-returns.
ReturnsPanel ingest_csv(const std::string& path, double winsor_fraction = 0.005);
ReturnsPanel ingest_rows(std::vector<std::string> tickers, std::vector<int> epoch_days, Mat raw,
                         double winsor_fraction = 0.005);

// Rolling standardized windows (N days x d tickers, stride 1). The condition
// marks windows whose conditioned tickers each have a cumulative last-k-day
// return below tau; tau arrives in raw units and is mapped to the
// standardized scale through the recorded stds (an approximation, since
// weekday shifts are ignored; reports flag it).
struct WindowSet {
  int N = 64, k = 10, m = 5, d = 0;
  double tau_raw = 0.0;
  Vec tau_std;  // per conditioned ticker
  std::vector<int> cond_tickers;
  std::vector<Mat> windows;
  std::vector<int> start_row;  // source panel row, -1 for generated windows
  std::vector<char> mask;

  long count() const { return static_cast<long>(windows.size()); }
  long masked_count() const;
  void validate() const;
};

WindowSet make_windows(const ReturnsPanel& panel, int N, int k, int m, double tau_raw,
                       std::vector<int> cond_tickers);

// day-major flattening: state index = day * d + ticker
Mat flatten_windows(const WindowSet& ws);
WindowSet windows_from_states(const Mat& states, const WindowSet& like);

// the condition as a linear guidance set on the flattened state
GuidanceSet window_condition_set(const WindowSet& like);

enum class PortfolioRule { Equal, MinVariance, RiskParity };
std::string to_string(PortfolioRule);
PortfolioRule portfolio_rule_from_string(const std::string&);

// Weights from the estimation block (first N-k rows of a window):
//   equal         1/d
//   min_variance  argmin w' Cov w, sum w = 1, ridge 1e-6 tr/d
//   risk_parity   long-only equal risk contributions, cyclical updates
Vec portfolio_weights(PortfolioRule, const Mat& estimation_returns);

// risk contributions w_i (Cov w)_i under the ridged covariance of the block
Vec risk_contributions(const Vec& w, const Mat& estimation_returns);

// cumulative de-standardized portfolio log-return over the last m days
double evaluate_window(const Vec& weights, const WindowSet& ws, long idx, const StressTransform& tr,
                       const std::vector<int>* panel_weekdays);

struct StressRow {
  std::string rule;
  std::string source;
  double eta = 0.0;
  long count = 0;
  double mean = 0.0, sd = 0.0, q05 = 0.0, q10 = 0.0;
};

struct StressReport {
  std::vector<StressRow> rows;
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

// Statistics of the rule returns over condition-satisfying windows from each
// source. Throws when either source has no qualifying window.
StressReport stress_report(const WindowSet& generated, const WindowSet& real_conditioned,
                           const std::vector<PortfolioRule>& rules, const StressTransform& tr,
                           const std::vector<int>* panel_weekdays, double eta);

// Synthetic corpus: correlated Gaussians with weekday effects and occasional
// fat-tailed shocks, on consecutive business days.
Mat synthetic_returns(int rows, int d, std::uint64_t seed, std::vector<int>* epoch_days);
std::string synthetic_csv(int rows, int d, std::uint64_t seed);

}  // namespace hguide
