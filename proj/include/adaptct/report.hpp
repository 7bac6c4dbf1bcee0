#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "adaptct/eval.hpp"
#include "adaptct/trainer.hpp"

namespace adaptct {

// ---------------------------------------------------------------------------
// metrics CSV

inline constexpr const char* kMetricsCsvHeader = "episode,return,final_psnr,actor_loss,critic_loss,entropy";

inline std::string metrics_csv_row(const TrainRecord& r) {
  return std::to_string(r.episode) + "," + format_real(r.episode_return) + "," + format_real(r.final_psnr) + "," +
         format_real(r.actor_loss) + "," + format_real(r.critic_loss) + "," + format_real(r.entropy);
}

// ---------------------------------------------------------------------------
// CSV reading

/// Malformed CSV input; line() is 1-based.
class CsvError : public std::runtime_error {
 public:
  CsvError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // source line of each row

  int column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
};

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

/// Unquoted comma-separated text. An empty document yields an empty
/// table; otherwise the first line is the header and every row must have
/// the same number of fields.
inline CsvTable parse_csv(std::string_view text) {
  CsvTable t;
  std::size_t lineno = 0, pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw CsvError(lineno, "expected " + std::to_string(t.header.size()) + " fields, found " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.lines.push_back(lineno);
  }
  return t;
}

inline double csv_number(const CsvTable& t, std::size_t row, int col) {
  const std::string& s = t.rows[row][col];
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || s.empty())
    throw CsvError(t.lines[row], "column '" + t.header[col] + "': not a number: '" + s + "'");
  return v;
}

inline int require_column(const CsvTable& t, std::string_view name) {
  const int c = t.column(name);
  if (c < 0) throw CsvError(1, "missing column '" + std::string(name) + "'");
  return c;
}

// ---------------------------------------------------------------------------
// statistics for plots

struct Band {
  std::vector<double> mean, lo, hi;
};

/// Trailing-window mean and mean +- one standard deviation. Each window is
/// summed directly (two passes) rather than with running sums, which
/// cancel badly for near-constant series.
inline Band rolling_band(std::span<const double> xs, std::size_t window) {
  if (window == 0) throw DomainError("rolling window must be positive");
  Band b;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const std::size_t from = i + 1 >= window ? i + 1 - window : 0;
    const double n = static_cast<double>(i + 1 - from);
    double m = 0.0, ss = 0.0;
    for (std::size_t j = from; j <= i; ++j) m += xs[j];
    m /= n;
    for (std::size_t j = from; j <= i; ++j) ss += (xs[j] - m) * (xs[j] - m);
    const double sd = std::sqrt(ss / n);
    b.mean.push_back(m);
    b.lo.push_back(m - sd);
    b.hi.push_back(m + sd);
  }
  return b;
}

struct BoxStats {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

/// Quartiles by linear interpolation between order statistics.
inline BoxStats box_stats(std::vector<double> xs) {
  if (xs.empty()) throw DomainError("box_stats: no values");
  std::sort(xs.begin(), xs.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(xs.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double f = pos - static_cast<double>(i);
    return i + 1 < xs.size() ? xs[i] + f * (xs[i + 1] - xs[i]) : xs[i];
  };
  return {xs.front(), q(0.25), q(0.5), q(0.75), xs.back()};
}

// ---------------------------------------------------------------------------
// SVG

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

namespace svg_detail {

inline constexpr double kWidth = 640, kHeight = 400, kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
inline constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct Frame {
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

inline Frame make_frame(double x0, double x1, double y0, double y1) {
  if (!(x1 > x0)) x1 = x0 + 1;
  if (!(y1 > y0)) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pad = 0.05 * (y1 - y0);
  return {x0, x1, y0 - pad, y1 + pad};
}

inline std::string open(const std::string& title, const std::string& xlabel, const std::string& ylabel) {
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
     << "</text>\n"
     << "<g class=\"axes\" stroke=\"black\">\n"
     << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight << "\" y2=\""
     << kHeight - kBottom << "\"/>\n"
     << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kHeight - kBottom << "\"/>\n"
     << "</g>\n"
     << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">"
     << xml_escape(xlabel) << "</text>\n"
     << "<text x=\"16\" y=\"" << (kTop + kHeight - kBottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << (kTop + kHeight - kBottom) / 2 << ")\">" << xml_escape(ylabel) << "</text>\n";
  return os.str();
}

inline std::string y_ticks(const Frame& f) {
  std::ostringstream os;
  for (int k = 0; k <= 4; ++k) {
    const double y = f.y0 + (f.y1 - f.y0) * k / 4.0;
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(f.py(y) + 4) << "\" text-anchor=\"end\">" << num(y) << "</text>\n";
  }
  return os.str();
}

}  // namespace svg_detail

/// Rolling mean +- std band of one metric over episodes. Empty input gives
/// the axes only.
inline std::string training_curve_svg(std::span<const double> episodes, std::span<const double> values,
                                      std::size_t window, const std::string& metric) {
  using namespace svg_detail;
  if (episodes.size() != values.size()) throw DomainError("training_curve_svg: length mismatch");
  std::string out = open(metric + " (rolling window " + std::to_string(window) + ")", "episode", metric);
  if (!values.empty()) {
    const Band b = rolling_band(values, window);
    const auto [lo_it, hi_it] = std::pair{std::min_element(b.lo.begin(), b.lo.end()), std::max_element(b.hi.begin(), b.hi.end())};
    const Frame f = make_frame(episodes.front(), episodes.back(), *lo_it, *hi_it);
    std::ostringstream os;
    os << y_ticks(f);
    os << "<polygon class=\"band\" fill=\"" << kColors[0] << "\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < values.size(); ++i) os << num(f.px(episodes[i])) << ',' << num(f.py(b.hi[i])) << ' ';
    for (std::size_t i = values.size(); i-- > 0;) os << num(f.px(episodes[i])) << ',' << num(f.py(b.lo[i])) << ' ';
    os << "\"/>\n<polyline class=\"series\" fill=\"none\" stroke=\"" << kColors[0] << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < values.size(); ++i) os << num(f.px(episodes[i])) << ',' << num(f.py(b.mean[i])) << ' ';
    os << "\"/>\n";
    out += os.str();
  }
  return out + "</svg>\n";
}

/// One box (min, quartiles, max) per policy, labeled below the axis.
inline std::string box_plot_svg(const std::map<std::string, std::vector<double>>& series, const std::string& title) {
  using namespace svg_detail;
  std::string out = open(title, "policy", "final PSNR [dB]");
  if (!series.empty()) {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& [_, v] : series)
      for (double x : v) lo = std::min(lo, x), hi = std::max(hi, x);
    const Frame f = make_frame(0, static_cast<double>(series.size()), lo, hi);
    std::ostringstream os;
    os << y_ticks(f);
    std::size_t k = 0;
    for (const auto& [name, values] : series) {
      const BoxStats s = box_stats(values);
      const char* color = kColors[k % std::size(kColors)];
      const double cx = f.px(k + 0.5), half = 0.3 * (f.px(1) - f.px(0));
      os << "<g class=\"series\" stroke=\"" << color << "\">\n"
         << "<line x1=\"" << num(cx) << "\" y1=\"" << num(f.py(s.min)) << "\" x2=\"" << num(cx) << "\" y2=\""
         << num(f.py(s.max)) << "\"/>\n"
         << "<rect x=\"" << num(cx - half) << "\" y=\"" << num(f.py(s.q3)) << "\" width=\"" << num(2 * half)
         << "\" height=\"" << num(f.py(s.q1) - f.py(s.q3)) << "\" fill=\"" << color << "\" fill-opacity=\"0.3\"/>\n"
         << "<line x1=\"" << num(cx - half) << "\" y1=\"" << num(f.py(s.median)) << "\" x2=\"" << num(cx + half)
         << "\" y2=\"" << num(f.py(s.median)) << "\" stroke-width=\"2\"/>\n"
         << "</g>\n"
         << "<text class=\"label\" x=\"" << num(cx) << "\" y=\"" << kHeight - kBottom + 16 << "\" text-anchor=\"middle\">"
         << xml_escape(name) << "</text>\n";
      ++k;
    }
    out += os.str();
  }
  return out + "</svg>\n";
}

}  // namespace adaptct
