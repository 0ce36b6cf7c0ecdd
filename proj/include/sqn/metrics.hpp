#pragma once

#include <charconv>
#include <cstdint>
#include <deque>
#include <fstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

namespace sqn {

constexpr long long kMovingAvgWindow = 10000;
constexpr const char* kMetricsHeader =
    "t,backlog,time_avg,moving_avg,intervened,episode,int_rate,eta_hat,q_star";

// shortest round-trip decimal form; keeps CSVs bit-stable across runs
inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc())
    throw std::runtime_error("failed to format a floating-point value");
  return std::string(buf, res.ptr);
}

inline std::vector<double> time_average(const std::vector<double>& series) {
  std::vector<double> out(series.size());
  double sum = 0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    sum += series[i];
    out[i] = sum / static_cast<double>(i + 1);
  }
  return out;
}

// trailing mean over exactly `window` entries; first value appears once a
// full window exists
inline std::vector<double> moving_average(const std::vector<double>& series,
                                          std::size_t window) {
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  std::vector<double> out;
  if (series.size() < window) return out;
  out.reserve(series.size() - window + 1);
  double sum = 0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    sum += series[i];
    if (i + 1 > window) sum -= series[i + 1 - window - 1];
    if (i + 1 >= window) out.push_back(sum / static_cast<double>(window));
  }
  return out;
}

// Streams per-step rows; backlog sums are integer-accumulated so time_avg and
// moving_avg are exact rationals.
class MetricsWriter {
 public:
  MetricsWriter(const std::string& path, bool append = false) {
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot open metrics file: " + path);
    if (!append) out_ << kMetricsHeader << "\n";
  }

  void write_row(long long backlog, int intervened, long long episode,
                 double int_rate, double eta_hat, double q_star) {
    ++rows_;
    cum_ += backlog;
    ring_.push_back(backlog);
    ring_sum_ += backlog;
    if (static_cast<long long>(ring_.size()) > kMovingAvgWindow) {
      ring_sum_ -= ring_.front();
      ring_.pop_front();
    }
    out_ << rows_ << ',' << backlog << ','
         << format_double(static_cast<double>(cum_) / static_cast<double>(rows_))
         << ',';
    if (rows_ >= kMovingAvgWindow)
      out_ << format_double(static_cast<double>(ring_sum_) /
                            static_cast<double>(kMovingAvgWindow));
    out_ << ',' << intervened << ',' << episode << ',' << format_double(int_rate)
         << ',' << format_double(eta_hat) << ',' << format_double(q_star)
         << '\n';
    if (!out_) throw std::runtime_error("metrics write failed");
  }

  void flush() { out_.flush(); }
  long long rows() const { return rows_; }
  long long cum_backlog() const { return cum_; }

  std::vector<long long> ring_chronological() const {
    return {ring_.begin(), ring_.end()};
  }

  void restore(long long rows, long long cum, const std::vector<long long>& ring) {
    rows_ = rows;
    cum_ = cum;
    ring_.assign(ring.begin(), ring.end());
    ring_sum_ = 0;
    for (long long b : ring_) ring_sum_ += b;
  }

 private:
  std::ofstream out_;
  long long rows_ = 0;
  long long cum_ = 0;
  long long ring_sum_ = 0;
  std::deque<long long> ring_;
};

// two-sided 95% Student-t quantile by residual degrees of freedom
inline double t_quantile_975(int dof) {
  static const double table[] = {
      12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
      2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
      2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
  if (dof < 1) throw std::invalid_argument("degrees of freedom must be >= 1");
  if (dof <= 30) return table[dof - 1];
  return 1.960;
}

}  // namespace sqn
