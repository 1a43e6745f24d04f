#include "pogvins/outputs.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pogvins/earth.hpp"
#include "pogvins/errors.hpp"

namespace pogvins {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kErrorHeader = {"t",        "err_right",   "err_front",
                                               "err_up",   "trans_err_m", "rot_err_deg"};
const std::vector<std::string> kCdfHeader = {"trans_err_m", "fraction"};

void add_stats(KvConfig& kv, const std::string& prefix, const Stats& s) {
  kv.add(prefix + "_max", format_double(s.max));
  kv.add(prefix + "_avg", format_double(s.avg));
  kv.add(prefix + "_rms", format_double(s.rms));
  kv.add(prefix + "_p95", format_double(s.p95));
}

/// Maps data ranges onto one SVG panel.
struct Panel {
  double x0, y0, w, h;
  double xmin, xmax, ymin, ymax;

  double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * w; }
  double py(double y) const { return y0 + h - (y - ymin) / (ymax - ymin) * h; }
};

void fix_range(double& lo, double& hi) {
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
}

std::string num(double v) {
  // Fixed precision keeps files small; values are pixel coordinates.
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << v;
  return s.str();
}

std::string polyline(const Panel& p, const std::vector<double>& xs, const std::vector<double>& ys,
                     const std::string& color) {
  std::string pts;
  const std::size_t n = xs.size();
  const std::size_t step = std::max<std::size_t>(1, n / 2000);
  for (std::size_t k = 0; k < n; k += step) {
    pts += num(p.px(xs[k])) + "," + num(p.py(ys[k])) + " ";
  }
  if (n > 0 && (n - 1) % step != 0) pts += num(p.px(xs[n - 1])) + "," + num(p.py(ys[n - 1]));
  return "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.2\" points=\"" + pts +
         "\"/>\n";
}

std::string frame(const Panel& p, const std::string& title, const std::string& xl,
                  const std::string& yl) {
  std::string s;
  s += "<rect x=\"" + num(p.x0) + "\" y=\"" + num(p.y0) + "\" width=\"" + num(p.w) +
       "\" height=\"" + num(p.h) + "\" fill=\"none\" stroke=\"#444\"/>\n";
  s += "<text x=\"" + num(p.x0) + "\" y=\"" + num(p.y0 - 8) + "\" font-size=\"13\">" + title +
       "</text>\n";
  s += "<text x=\"" + num(p.x0 + p.w / 2) + "\" y=\"" + num(p.y0 + p.h + 30) +
       "\" font-size=\"11\" text-anchor=\"middle\">" + xl + "</text>\n";
  s += "<text x=\"" + num(p.x0 - 40) + "\" y=\"" + num(p.y0 + p.h / 2) +
       "\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 " + num(p.x0 - 40) +
       " " + num(p.y0 + p.h / 2) + ")\">" + yl + "</text>\n";
  auto label = [&](double x, double y, const std::string& t, const char* anchor) {
    s += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"10\" text-anchor=\"" +
         anchor + "\">" + t + "</text>\n";
  };
  std::ostringstream a, b, c, d;
  a.precision(4);
  b.precision(4);
  c.precision(4);
  d.precision(4);
  a << p.xmin;
  b << p.xmax;
  c << p.ymin;
  d << p.ymax;
  label(p.x0, p.y0 + p.h + 14, a.str(), "start");
  label(p.x0 + p.w, p.y0 + p.h + 14, b.str(), "end");
  label(p.x0 - 4, p.y0 + p.h, c.str(), "end");
  label(p.x0 - 4, p.y0 + 10, d.str(), "end");
  return s;
}

}  // namespace

KvConfig report_to_kv(const ErrorReport& r) {
  KvConfig kv;
  kv.add("samples", std::to_string(r.translation_err.size()));
  kv.add("trajectory_length_m", format_double(r.trajectory_length));
  add_stats(kv, "trans_m", r.translation);
  add_stats(kv, "rot_deg", r.rotation);
  if (r.normalized) {
    add_stats(kv, "trans_pct", r.translation_pct);
    add_stats(kv, "rot_deg_per_m", r.rotation_per_m);
  }
  return kv;
}

std::string render_svg(const std::vector<TrajectorySample>& estimate,
                       const std::vector<TrajectorySample>& truth, const ErrorReport& report,
                       const std::string& title) {
  std::string s =
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1200\" height=\"900\" "
      "viewBox=\"0 0 1200 900\" font-family=\"sans-serif\">\n"
      "<rect width=\"1200\" height=\"900\" fill=\"white\"/>\n";
  s += "<text x=\"600\" y=\"28\" font-size=\"16\" text-anchor=\"middle\">" + title + "</text>\n";

  // Horizontal trajectories in the ENU frame at the first truth sample.
  if (!truth.empty()) {
    const Vec3 o = truth.front().position;
    const Mat3 c = enu_to_ecef_rotation(ecef_to_lla(o));
    auto en = [&](const std::vector<TrajectorySample>& tr, std::vector<double>& e,
                  std::vector<double>& n) {
      for (const auto& p : tr) {
        const Vec3 l = c.transpose() * (p.position - o);
        e.push_back(l.x());
        n.push_back(l.y());
      }
    };
    std::vector<double> te, tn, ee, enn;
    en(truth, te, tn);
    en(estimate, ee, enn);
    double xmin = *std::min_element(te.begin(), te.end());
    double xmax = *std::max_element(te.begin(), te.end());
    double ymin = *std::min_element(tn.begin(), tn.end());
    double ymax = *std::max_element(tn.begin(), tn.end());
    for (std::size_t k = 0; k < ee.size(); ++k) {
      xmin = std::min(xmin, ee[k]);
      xmax = std::max(xmax, ee[k]);
      ymin = std::min(ymin, enn[k]);
      ymax = std::max(ymax, enn[k]);
    }
    fix_range(xmin, xmax);
    fix_range(ymin, ymax);
    // Equal axis scale.
    const double span = std::max(xmax - xmin, ymax - ymin) * 1.05;
    const double cx = 0.5 * (xmin + xmax);
    const double cy = 0.5 * (ymin + ymax);
    const Panel p{80, 70, 480, 480, cx - span / 2, cx + span / 2, cy - span / 2, cy + span / 2};
    s += frame(p, "Trajectory (black truth, red estimate)", "East (m)", "North (m)");
    s += polyline(p, te, tn, "#000");
    if (!ee.empty()) s += polyline(p, ee, enn, "#d62728");
  }

  if (!report.timestamps.empty()) {
    std::vector<double> right, front, up;
    double lo = 0.0;
    double hi = 0.0;
    for (const Vec3& e : report.error_rfu) {
      right.push_back(e.x());
      front.push_back(e.y());
      up.push_back(e.z());
      lo = std::min({lo, e.x(), e.y(), e.z()});
      hi = std::max({hi, e.x(), e.y(), e.z()});
    }
    fix_range(lo, hi);
    double t0 = report.timestamps.front();
    double t1 = report.timestamps.back();
    fix_range(t0, t1);
    const Panel p{680, 70, 480, 330, t0, t1, lo, hi};
    s += frame(p, "Position error R/F/U (blue/green/orange)", "time (s)", "error (m)");
    s += polyline(p, report.timestamps, right, "#1f77b4");
    s += polyline(p, report.timestamps, front, "#2ca02c");
    s += polyline(p, report.timestamps, up, "#ff7f0e");

    const auto cdf = empirical_cdf(report.translation_err);
    std::vector<double> xs, ys;
    for (const auto& [v, f] : cdf) {
      xs.push_back(v);
      ys.push_back(f);
    }
    double x0 = 0.0;
    double x1 = xs.back();
    fix_range(x0, x1);
    const Panel q{680, 500, 480, 330, x0, x1, 0.0, 1.0};
    s += frame(q, "Translation error CDF", "error (m)", "fraction");
    s += polyline(q, xs, ys, "#9467bd");

    std::ostringstream summary;
    summary.precision(4);
    summary << "RMS " << report.translation.rms << " m, p95 " << report.translation.p95
            << " m, max " << report.translation.max << " m, rotation RMS "
            << report.rotation.rms << " deg";
    s += "<text x=\"80\" y=\"610\" font-size=\"12\">" + summary.str() + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

void emit_outputs(const std::string& dir, const std::vector<TrajectorySample>& estimate,
                  const std::vector<TrajectorySample>& truth, const ErrorReport& report,
                  const KvConfig& extra) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create '" + dir + "': " + ec.message());
  const fs::path root(dir);
  write_trajectory_csv(estimate, (root / "trajectory.csv").string());
  write_trajectory_csv(truth, (root / "truth.csv").string());

  CsvTable errors;
  errors.header = kErrorHeader;
  for (std::size_t k = 0; k < report.timestamps.size(); ++k) {
    const Vec3& e = report.error_rfu[k];
    errors.rows.push_back({report.timestamps[k], e.x(), e.y(), e.z(), report.translation_err[k],
                           report.rotation_err[k]});
  }
  write_csv((root / "errors.csv").string(), errors);

  CsvTable cdf;
  cdf.header = kCdfHeader;
  for (const auto& [v, f] : empirical_cdf(report.translation_err)) cdf.rows.push_back({v, f});
  write_csv((root / "cdf.csv").string(), cdf);

  KvConfig kv = extra;
  const KvConfig stats = report_to_kv(report);
  for (const auto& [k, v] : stats.entries()) kv.add(k, v);
  {
    std::ofstream out((root / "report.txt").string(), std::ios::binary);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write report.txt");
    out << kv.to_string();
  }
  std::ofstream svg((root / "plot.svg").string(), std::ios::binary);
  if (!svg) throw Error(ErrorCode::kIoError, "cannot write plot.svg");
  svg << render_svg(estimate, truth, report, kv.get_string("mode", "trajectory"));
  if (!svg) throw Error(ErrorCode::kIoError, "write failed for plot.svg");
}

ErrorReport read_errors_csv(const std::string& path) {
  const CsvTable t = read_csv(path, kErrorHeader);
  ErrorReport r;
  for (const auto& row : t.rows) {
    r.timestamps.push_back(row[0]);
    r.error_rfu.emplace_back(row[1], row[2], row[3]);
    r.translation_err.push_back(row[4]);
    r.rotation_err.push_back(row[5]);
  }
  if (r.timestamps.empty()) throw Error(ErrorCode::kParseError, path + ": no rows");
  r.translation = compute_stats(r.translation_err);
  r.rotation = compute_stats(r.rotation_err);
  return r;
}

void plot_directory(const std::string& dir) {
  const fs::path root(dir);
  const auto est = read_trajectory_csv((root / "trajectory.csv").string());
  const auto truth = read_trajectory_csv((root / "truth.csv").string());
  const ErrorReport rep = read_errors_csv((root / "errors.csv").string());
  std::string title = "trajectory";
  if (fs::exists(root / "report.txt")) {
    title = KvConfig::load((root / "report.txt").string()).get_string("mode", title);
  }
  std::ofstream svg((root / "plot.svg").string(), std::ios::binary);
  if (!svg) throw Error(ErrorCode::kIoError, "cannot write plot.svg");
  svg << render_svg(est, truth, rep, title);
}

}  // namespace pogvins
