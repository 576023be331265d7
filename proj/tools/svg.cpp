#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace msnode::cli {

namespace {

constexpr double kW = 800, kH = 320, kL = 60, kR = 20, kT = 30, kB = 40;

std::string f2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string g4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

std::string render_svg(const StatePlot& p) {
  const Index T = p.times.size();
  double lo = INFINITY, hi = -INFINITY;
  auto grow = [&](const Vec& v) {
    for (Index i = 0; i < v.size(); ++i) {
      if (std::isfinite(v[i])) {
        lo = std::min(lo, v[i]);
        hi = std::max(hi, v[i]);
      }
    }
  };
  grow(p.measured);
  // Predictions far outside the data range are clipped to keep the data readable.
  const double span0 = std::isfinite(hi - lo) && hi > lo ? hi - lo : 1.0;
  const double clip_lo = lo - span0, clip_hi = hi + span0;
  if (p.ms) grow(p.ms->cwiseMax(clip_lo).cwiseMin(clip_hi));
  if (p.ss) grow(p.ss->cwiseMax(clip_lo).cwiseMin(clip_hi));
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double t0 = T ? p.times[0] : 0.0, t1 = T ? p.times[T - 1] : 1.0;
  auto X = [&](double t) { return kL + (t - t0) / std::max(t1 - t0, 1e-300) * (kW - kL - kR); };
  auto Y = [&](double v) {
    v = std::clamp(v, clip_lo, clip_hi);
    return kT + (hi - v) / (hi - lo) * (kH - kT - kB);
  };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f2(kW) + "\" height=\"" + f2(kH) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + f2(kL) + "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" + p.title + "</text>\n";
  s += "<rect x=\"" + f2(kL) + "\" y=\"" + f2(kT) + "\" width=\"" + f2(kW - kL - kR) + "\" height=\"" +
       f2(kH - kT - kB) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double v : {lo, hi}) {
    s += "<text x=\"4\" y=\"" + f2(Y(v) + 4) + "\" font-family=\"sans-serif\" font-size=\"11\">" + g4(v) +
         "</text>\n";
  }
  for (double t : {t0, t1}) {
    s += "<text x=\"" + f2(X(t) - 10) + "\" y=\"" + f2(kH - kB + 16) +
         "\" font-family=\"sans-serif\" font-size=\"11\">" + g4(t) + "</text>\n";
  }
  s += "<line x1=\"" + f2(X(p.divider)) + "\" y1=\"" + f2(kT) + "\" x2=\"" + f2(X(p.divider)) + "\" y2=\"" +
       f2(kH - kB) + "\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>\n";

  auto polyline = [&](const Vec& v, const char* color, const char* label) {
    std::string pts;
    for (Index i = 0; i < std::min(T, v.size()); ++i) {
      if (!std::isfinite(v[i])) break;
      pts += f2(X(p.times[i])) + "," + f2(Y(v[i])) + " ";
    }
    if (!pts.empty()) pts.pop_back();
    s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + pts +
         "\"><title>" + label + "</title></polyline>\n";
  };
  for (Index i = 0; i < std::min(T, p.measured.size()); ++i) {
    s += "<circle cx=\"" + f2(X(p.times[i])) + "\" cy=\"" + f2(Y(p.measured[i])) + "\" r=\"1.8\" fill=\"black\"/>\n";
  }
  if (p.ms) polyline(*p.ms, "#1f77b4", "multiple shooting");
  if (p.ss) polyline(*p.ss, "#d62728", "single shooting");

  double ly = kT + 14;
  auto legend = [&](const char* color, const char* label) {
    s += "<line x1=\"" + f2(kW - 170) + "\" y1=\"" + f2(ly - 4) + "\" x2=\"" + f2(kW - 150) + "\" y2=\"" +
         f2(ly - 4) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + f2(kW - 145) + "\" y=\"" + f2(ly) + "\" font-family=\"sans-serif\" font-size=\"11\">" +
         label + "</text>\n";
    ly += 14;
  };
  legend("black", "measurements");
  if (p.ms) legend("#1f77b4", "multiple shooting");
  if (p.ss) legend("#d62728", "single shooting");
  s += "</svg>\n";
  return s;
}

void write_svg(const StatePlot& plot, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << render_svg(plot);
}

}  // namespace msnode::cli
