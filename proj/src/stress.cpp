// SPDX-License-Identifier: Apache-2.0
#include "hguide/stress.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>

#include "hguide/errors.hpp"
#include "hguide/io.hpp"
#include "hguide/metrics.hpp"
#include "hguide/rng.hpp"

namespace hguide {

int days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097 + static_cast<int>(doe) - 719468;
}

void civil_from_days(int z, int* y, int* m, int* d) {
  z += 719468;
  const int era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int yy = static_cast<int>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  *d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  *m = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
  *y = yy + (*m <= 2);
}

int weekday_from_days(int z) { return static_cast<int>(((z % 7) + 10) % 7); }

std::string iso_from_days(int z) {
  int y, m, d;
  civil_from_days(z, &y, &m, &d);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
  return buf;
}

int days_from_iso(const std::string& iso) {
  int y = 0, m = 0, d = 0;
  if (std::sscanf(iso.c_str(), "%d-%d-%d", &y, &m, &d) != 3 || m < 1 || m > 12 || d < 1 || d > 31) {
    throw_format("bad ISO date '" + iso + "'");
  }
  const int z = days_from_civil(y, m, d);
  int y2, m2, d2;
  civil_from_days(z, &y2, &m2, &d2);
  require(y2 == y && m2 == m && d2 == d, ErrorKind::Format, "nonexistent date '" + iso + "'");
  return z;
}

double StressTransform::destandardize(double x, int ticker, int weekday) const {
  const double shift = weekday >= 0 ? weekday_mean(ticker, weekday) : mean_shift[ticker];
  return long_run_std[ticker] * x + shift;
}

void ReturnsPanel::validate() const {
  const long n = rows();
  require(n >= 2, ErrorKind::Domain, "panel needs at least two rows");
  require(standardized.cols() == n_tickers() && raw.cols() == n_tickers(), ErrorKind::Domain,
          "panel column mismatch");
  require(static_cast<long>(epoch_days.size()) == n && static_cast<long>(weekday.size()) == n,
          ErrorKind::Domain, "panel date arrays mismatch");
  require(standardized.allFinite() && raw.allFinite(), ErrorKind::Numerical, "panel holds non-finite values");
  for (int c = 0; c < n_tickers(); ++c) {
    const Vec col = standardized.col(c);
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().sum() / (n - 1));
    require(std::abs(sd - 1.0) <= 1e-9, ErrorKind::Numerical,
            "standardized column lost unit long-run std: " + tickers[c]);
  }
}

ReturnsPanel ingest_rows(std::vector<std::string> tickers, std::vector<int> epoch_days, Mat raw,
                         double winsor_fraction) {
  const int d = static_cast<int>(tickers.size());
  const long n = raw.rows();
  require(d >= 2, ErrorKind::Domain, "panel needs at least two tickers");
  require(raw.cols() == d, ErrorKind::Domain, "returns matrix column count mismatch");
  require(static_cast<long>(epoch_days.size()) == n, ErrorKind::Domain, "one date per row required");
  require(n >= 10, ErrorKind::Domain, "panel too short");
  require(winsor_fraction >= 0.0 && winsor_fraction < 0.5, ErrorKind::Domain,
          "winsor fraction outside [0, 0.5)");
  require(raw.allFinite(), ErrorKind::Format, "returns matrix holds non-finite values");

  ReturnsPanel panel;
  panel.tickers = std::move(tickers);
  panel.epoch_days = std::move(epoch_days);
  panel.weekday.resize(n);
  for (long i = 0; i < n; ++i) panel.weekday[i] = weekday_from_days(panel.epoch_days[i]);

  StressTransform& tr = panel.transform;
  tr.winsor_fraction = winsor_fraction;
  tr.cap_lo.resize(d);
  tr.cap_hi.resize(d);
  tr.weekday_mean = Mat::Zero(d, 7);
  tr.long_run_std.resize(d);
  tr.mean_shift.resize(d);

  panel.raw = std::move(raw);
  for (int c = 0; c < d; ++c) {
    Vec sorted = panel.raw.col(c);
    std::sort(sorted.data(), sorted.data() + n);
    tr.cap_lo[c] = nearest_rank_quantile(sorted, winsor_fraction);
    tr.cap_hi[c] = nearest_rank_quantile(sorted, 1.0 - winsor_fraction);
    panel.raw.col(c) = panel.raw.col(c).cwiseMax(tr.cap_lo[c]).cwiseMin(tr.cap_hi[c]);
  }

  for (int c = 0; c < d; ++c) {
    double count[7] = {0};
    for (long i = 0; i < n; ++i) {
      tr.weekday_mean(c, panel.weekday[i]) += panel.raw(i, c);
      count[panel.weekday[i]] += 1.0;
    }
    for (int w = 0; w < 7; ++w) {
      if (count[w] > 0) tr.weekday_mean(c, w) /= count[w];
    }
  }

  panel.standardized.resize(n, d);
  for (int c = 0; c < d; ++c) {
    Vec deseason(n);
    for (long i = 0; i < n; ++i) deseason[i] = panel.raw(i, c) - tr.weekday_mean(c, panel.weekday[i]);
    const double mean = deseason.mean();
    const double sd = std::sqrt((deseason.array() - mean).square().sum() / (n - 1));
    require(sd > 0.0, ErrorKind::Domain, "column has zero long-run std: " + panel.tickers[c]);
    tr.long_run_std[c] = sd;
    panel.standardized.col(c) = deseason / sd;
    double shift = 0.0;
    for (long i = 0; i < n; ++i) shift += tr.weekday_mean(c, panel.weekday[i]);
    tr.mean_shift[c] = shift / n;
  }
  panel.validate();
  return panel;
}

namespace {
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}
}  // namespace

ReturnsPanel ingest_csv(const std::string& path, double winsor_fraction) {
  const std::string text = read_text_file(path);
  std::vector<std::string> lines;
  {
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) lines.push_back(line);
    }
  }
  require(lines.size() >= 3, ErrorKind::Format, "csv needs a header and at least two rows: " + path);
  const std::vector<std::string> header = split_csv_line(lines[0]);
  require(header.size() >= 3 && header[0] == "date", ErrorKind::Format,
          "csv header must be date,<ticker>,... with at least two tickers: " + path);
  std::vector<std::string> tickers(header.begin() + 1, header.end());
  const int d = static_cast<int>(tickers.size());

  const long n = static_cast<long>(lines.size()) - 1;
  Mat raw(n, d);
  std::vector<int> days(n);
  std::vector<long> bad;
  int prev_day = std::numeric_limits<int>::min();
  for (long i = 0; i < n; ++i) {
    const std::vector<std::string> f = split_csv_line(lines[i + 1]);
    bool ok = static_cast<int>(f.size()) == d + 1 && !f[0].empty();
    if (ok) {
      try {
        days[i] = days_from_iso(f[0]);
        ok = days[i] > prev_day;
      } catch (const Error&) {
        ok = false;
      }
    }
    for (int c = 0; ok && c < d; ++c) {
      char* end = nullptr;
      const double v = std::strtod(f[c + 1].c_str(), &end);
      ok = end && *end == '\0' && !f[c + 1].empty() && std::isfinite(v);
      if (ok) raw(i, c) = v;
    }
    if (!ok) {
      bad.push_back(i + 2);  // 1-based line number
    } else {
      prev_day = days[i];
    }
  }
  if (!bad.empty()) {
    std::string msg = "csv rows failed to parse (missing/naN/unordered dates or fields) at lines:";
    for (std::size_t i = 0; i < bad.size() && i < 10; ++i) msg += " " + std::to_string(bad[i]);
    if (bad.size() > 10) msg += " (+" + std::to_string(bad.size() - 10) + " more)";
    throw_format(msg + " in " + path);
  }
  return ingest_rows(std::move(tickers), std::move(days), std::move(raw), winsor_fraction);
}

long WindowSet::masked_count() const {
  long c = 0;
  for (char v : mask) c += v != 0;
  return c;
}

void WindowSet::validate() const {
  require(m >= 1 && m <= k && k < N, ErrorKind::Domain, "window sizes must satisfy 1 <= m <= k < N");
  require(windows.size() == mask.size() && windows.size() == start_row.size(), ErrorKind::Domain,
          "window arrays mismatch");
  for (const Mat& w : windows) {
    require(w.rows() == N && w.cols() == d, ErrorKind::Domain, "window shape mismatch");
  }
}

namespace {
bool window_condition(const Mat& w, int k, const std::vector<int>& cond, const Vec& tau_std) {
  for (std::size_t ci = 0; ci < cond.size(); ++ci) {
    const double cum = w.col(cond[ci]).tail(k).sum();
    if (!(cum < tau_std[ci])) return false;
  }
  return true;
}
}  // namespace

WindowSet make_windows(const ReturnsPanel& panel, int N, int k, int m, double tau_raw,
                       std::vector<int> cond_tickers) {
  require(panel.rows() >= N, ErrorKind::Domain, "panel shorter than the window length");
  WindowSet ws;
  ws.N = N;
  ws.k = k;
  ws.m = m;
  ws.d = panel.n_tickers();
  ws.tau_raw = tau_raw;
  ws.cond_tickers = std::move(cond_tickers);
  ws.tau_std.resize(ws.cond_tickers.size());
  for (std::size_t ci = 0; ci < ws.cond_tickers.size(); ++ci) {
    const int c = ws.cond_tickers[ci];
    require(c >= 0 && c < ws.d, ErrorKind::Domain, "conditioned ticker index out of range");
    ws.tau_std[ci] = tau_raw / panel.transform.long_run_std[c];
  }
  ws.validate();

  const long count = panel.rows() - N + 1;
  ws.windows.reserve(count);
  for (long s = 0; s < count; ++s) {
    ws.windows.push_back(panel.standardized.block(s, 0, N, ws.d));
    ws.start_row.push_back(static_cast<int>(s));
    ws.mask.push_back(window_condition(ws.windows.back(), k, ws.cond_tickers, ws.tau_std));
  }
  return ws;
}

Mat flatten_windows(const WindowSet& ws) {
  const long count = ws.count();
  require(count > 0, ErrorKind::Domain, "no windows to flatten");
  Mat out(static_cast<long>(ws.N) * ws.d, count);
  for (long w = 0; w < count; ++w) {
    for (int day = 0; day < ws.N; ++day) {
      for (int c = 0; c < ws.d; ++c) out(static_cast<long>(day) * ws.d + c, w) = ws.windows[w](day, c);
    }
  }
  return out;
}

WindowSet windows_from_states(const Mat& states, const WindowSet& like) {
  require(states.rows() == static_cast<long>(like.N) * like.d, ErrorKind::Domain,
          "state dimension does not match the window shape");
  WindowSet ws;
  ws.N = like.N;
  ws.k = like.k;
  ws.m = like.m;
  ws.d = like.d;
  ws.tau_raw = like.tau_raw;
  ws.tau_std = like.tau_std;
  ws.cond_tickers = like.cond_tickers;
  for (long w = 0; w < states.cols(); ++w) {
    Mat win(ws.N, ws.d);
    for (int day = 0; day < ws.N; ++day) {
      for (int c = 0; c < ws.d; ++c) win(day, c) = states(static_cast<long>(day) * ws.d + c, w);
    }
    ws.windows.push_back(std::move(win));
    ws.start_row.push_back(-1);
    ws.mask.push_back(window_condition(ws.windows.back(), ws.k, ws.cond_tickers, ws.tau_std));
  }
  ws.validate();
  return ws;
}

GuidanceSet window_condition_set(const WindowSet& like) {
  const long dim = static_cast<long>(like.N) * like.d;
  if (like.cond_tickers.empty()) return GuidanceSet::all(static_cast<int>(dim));
  Mat A = Mat::Zero(static_cast<long>(like.cond_tickers.size()), dim);
  for (std::size_t ci = 0; ci < like.cond_tickers.size(); ++ci) {
    for (int day = like.N - like.k; day < like.N; ++day) {
      A(ci, static_cast<long>(day) * like.d + like.cond_tickers[ci]) = 1.0;
    }
  }
  const Vec lo = Vec::Constant(like.cond_tickers.size(), -std::numeric_limits<double>::infinity());
  return GuidanceSet::linear(std::move(A), lo, like.tau_std);
}

std::string to_string(PortfolioRule r) {
  switch (r) {
    case PortfolioRule::Equal: return "equal";
    case PortfolioRule::MinVariance: return "min_variance";
    case PortfolioRule::RiskParity: return "risk_parity";
  }
  return "equal";
}

PortfolioRule portfolio_rule_from_string(const std::string& s) {
  if (s == "equal") return PortfolioRule::Equal;
  if (s == "min_variance") return PortfolioRule::MinVariance;
  if (s == "risk_parity") return PortfolioRule::RiskParity;
  throw_config("unknown portfolio rule '" + s + "'");
}

namespace {
Mat ridged_covariance(const Mat& block) {
  const long n = block.rows();
  const int d = static_cast<int>(block.cols());
  require(n >= 2 && d >= 1, ErrorKind::Domain, "covariance needs at least two rows");
  const Mat centered = block.rowwise() - block.colwise().mean();
  Mat cov = centered.transpose() * centered / static_cast<double>(n - 1);
  cov += (1e-6 * cov.trace() / d) * Mat::Identity(d, d);
  return cov;
}
}  // namespace

Vec portfolio_weights(PortfolioRule rule, const Mat& estimation_returns) {
  const int d = static_cast<int>(estimation_returns.cols());
  require(d >= 1, ErrorKind::Domain, "no tickers");
  if (rule == PortfolioRule::Equal) return Vec::Constant(d, 1.0 / d);

  const Mat cov = ridged_covariance(estimation_returns);
  if (rule == PortfolioRule::MinVariance) {
    Eigen::LLT<Mat> llt(cov);
    require(llt.info() == Eigen::Success, ErrorKind::Numerical,
            "covariance not positive definite after ridge");
    const Vec w = llt.solve(Vec::Ones(d));
    return w / w.sum();
  }

  // long-only risk parity: solve x_i (cov x)_i = 1/d by cyclical updates
  const double b = 1.0 / d;
  Vec x(d);
  for (int i = 0; i < d; ++i) {
    require(cov(i, i) > 0.0, ErrorKind::Numerical, "degenerate variance in risk parity");
    x[i] = std::sqrt(b / cov(i, i));
  }
  for (int sweep = 0; sweep < 10000; ++sweep) {
    for (int i = 0; i < d; ++i) {
      const double c = cov.row(i).dot(x) - cov(i, i) * x[i];
      x[i] = (-c + std::sqrt(c * c + 4.0 * cov(i, i) * b)) / (2.0 * cov(i, i));
    }
    const Vec contrib = x.cwiseProduct(cov * x);
    if ((contrib.array() - b).abs().maxCoeff() < 1e-12) return x / x.sum();
  }
  throw_numerical("risk parity iteration did not converge");
}

Vec risk_contributions(const Vec& w, const Mat& estimation_returns) {
  const Mat cov = ridged_covariance(estimation_returns);
  return w.cwiseProduct(cov * w);
}

double evaluate_window(const Vec& weights, const WindowSet& ws, long idx, const StressTransform& tr,
                       const std::vector<int>* panel_weekdays) {
  require(idx >= 0 && idx < ws.count(), ErrorKind::Domain, "window index out of range");
  require(weights.size() == ws.d, ErrorKind::Domain, "weight dimension mismatch");
  const Mat& win = ws.windows[idx];
  const int start = ws.start_row[idx];
  double total = 0.0;
  for (int r = ws.N - ws.m; r < ws.N; ++r) {
    const int wd = (start >= 0 && panel_weekdays) ? (*panel_weekdays)[start + r] : -1;
    for (int c = 0; c < ws.d; ++c) total += weights[c] * tr.destandardize(win(r, c), c, wd);
  }
  return total;
}

namespace {
StressRow summarize(const std::string& rule, const std::string& source, double eta, Vec returns) {
  std::sort(returns.data(), returns.data() + returns.size());
  StressRow row;
  row.rule = rule;
  row.source = source;
  row.eta = eta;
  row.count = returns.size();
  row.mean = returns.mean();
  row.sd = returns.size() > 1
               ? std::sqrt((returns.array() - row.mean).square().sum() / (returns.size() - 1))
               : 0.0;
  row.q05 = nearest_rank_quantile(returns, 0.05);
  row.q10 = nearest_rank_quantile(returns, 0.10);
  return row;
}

Vec masked_returns(const WindowSet& ws, PortfolioRule rule, const StressTransform& tr,
                   const std::vector<int>* panel_weekdays, const char* label) {
  std::vector<double> vals;
  for (long i = 0; i < ws.count(); ++i) {
    if (!ws.mask[i]) continue;
    const Vec w = portfolio_weights(rule, ws.windows[i].topRows(ws.N - ws.k));
    vals.push_back(evaluate_window(w, ws, i, tr, panel_weekdays));
  }
  if (vals.empty()) {
    throw_domain(std::string("no condition-satisfying windows in the ") + label + " set: 0 of " +
                 std::to_string(ws.count()) + " hit the condition");
  }
  return Eigen::Map<Vec>(vals.data(), static_cast<long>(vals.size()));
}
}  // namespace

StressReport stress_report(const WindowSet& generated, const WindowSet& real_conditioned,
                           const std::vector<PortfolioRule>& rules, const StressTransform& tr,
                           const std::vector<int>* panel_weekdays, double eta) {
  require(!rules.empty(), ErrorKind::Domain, "no portfolio rules requested");
  require(generated.d == real_conditioned.d && generated.N == real_conditioned.N &&
              generated.m == real_conditioned.m,
          ErrorKind::Domain, "window sets disagree in shape");
  StressReport rep;
  for (PortfolioRule rule : rules) {
    rep.rows.push_back(summarize(to_string(rule), "generated", eta,
                                 masked_returns(generated, rule, tr, nullptr, "generated")));
    rep.rows.push_back(summarize(to_string(rule), "real", eta,
                                 masked_returns(real_conditioned, rule, tr, panel_weekdays, "real")));
  }
  return rep;
}

std::string StressReport::to_csv() const {
  std::string out = "rule,source,eta,count,mean,std,q05,q10\n";
  for (const StressRow& r : rows) {
    out += r.rule + "," + r.source + "," + format_double(r.eta) + "," + std::to_string(r.count) +
           "," + format_double(r.mean) + "," + format_double(r.sd) + "," + format_double(r.q05) +
           "," + format_double(r.q10) + "\n";
  }
  return out;
}

nlohmann::json StressReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const StressRow& r : rows) {
    rows_json.push_back({{"rule", r.rule},
                         {"source", r.source},
                         {"eta", r.eta},
                         {"count", r.count},
                         {"mean", r.mean},
                         {"std", r.sd},
                         {"q05", r.q05},
                         {"q10", r.q10}});
  }
  return {{"rows", rows_json},
          {"threshold_conversion", "raw threshold divided by recorded long-run std; weekday shifts ignored"}};
}

Mat synthetic_returns(int rows, int d, std::uint64_t seed, std::vector<int>* epoch_days) {
  require(rows >= 10 && d >= 2, ErrorKind::Domain, "synthetic panel needs rows >= 10, d >= 2");
  Stream rng(derive(seed, "synthetic-panel"));

  Mat corr = Mat::Constant(d, d, 0.4);
  corr.diagonal().setOnes();
  const Mat L = Eigen::LLT<Mat>(corr).matrixL();

  Vec vol(d);
  for (int i = 0; i < d; ++i) vol[i] = 0.008 + 0.012 * i / std::max(1, d - 1);
  const double wd_shape[5] = {-1.0, -0.3, 0.1, 0.4, 0.8};

  Mat out(rows, d);
  if (epoch_days) epoch_days->resize(rows);
  int day = days_from_civil(2015, 1, 5);  // a Monday
  for (int r = 0; r < rows; ++r) {
    while (weekday_from_days(day) >= 5) ++day;
    const int wd = weekday_from_days(day);
    if (epoch_days) (*epoch_days)[r] = day;
    Vec z(d);
    for (int i = 0; i < d; ++i) z[i] = rng.normal();
    const double scale = rng.uniform() < 0.02 ? 4.0 : 1.0;
    const Vec shock = L * z;
    for (int i = 0; i < d; ++i) {
      const double seasonal = 0.0008 * (1.0 + static_cast<double>(i) / d) * wd_shape[wd];
      out(r, i) = vol[i] * scale * shock[i] + seasonal;
    }
    ++day;
  }
  return out;
}

std::string synthetic_csv(int rows, int d, std::uint64_t seed) {
  std::vector<int> days;
  const Mat r = synthetic_returns(rows, d, seed, &days);
  std::string out = "date";
  for (int c = 0; c < d; ++c) out += ",T" + std::to_string(c);
  out += "\n";
  for (int i = 0; i < rows; ++i) {
    out += iso_from_days(days[i]);
    for (int c = 0; c < d; ++c) out += "," + format_double(r(i, c));
    out += "\n";
  }
  return out;
}

}  // namespace hguide
