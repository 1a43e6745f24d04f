#include "pogvins/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pogvins/earth.hpp"
#include "pogvins/errors.hpp"
#include "pogvins/so3.hpp"

namespace pogvins {

Stats compute_stats(const std::vector<double>& values) {
  if (values.empty()) throw Error(ErrorCode::kInvalidArgument, "empty error series");
  Stats s;
  double sum = 0.0;
  double sq = 0.0;
  for (double v : values) {
    s.max = std::max(s.max, v);
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(values.size());
  s.avg = sum / n;
  s.rms = std::sqrt(sq / n);
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * n));
  s.p95 = sorted[std::max<std::size_t>(rank, 1) - 1];
  return s;
}

std::vector<std::pair<double, double>> empirical_cdf(const std::vector<double>& values) {
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::pair<double, double>> out;
  out.reserve(sorted.size());
  const double n = static_cast<double>(sorted.size());
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    out.emplace_back(sorted[k], static_cast<double>(k + 1) / n);
  }
  return out;
}

Mat3 rfu_rotation(const TrajectorySample& reference) {
  const Mat3 c = enu_to_ecef_rotation(ecef_to_lla(reference.position));
  const Vec3 up = c.col(2);
  Vec3 front = reference.attitude.col(0);
  front -= up * up.dot(front);
  if (front.norm() < 1e-9) front = c.col(1);  // looking straight up/down: fall back to north
  front.normalize();
  const Vec3 right = front.cross(up);
  Mat3 out;
  out.row(0) = right.transpose();
  out.row(1) = front.transpose();
  out.row(2) = up.transpose();
  return out;
}

ErrorReport compute_metrics(const std::vector<TrajectorySample>& estimate,
                            const std::vector<TrajectorySample>& truth,
                            const MetricsOptions& options) {
  if (truth.empty() || estimate.empty()) {
    throw Error(ErrorCode::kNoOverlap, "empty estimate or truth");
  }
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::size_t j = 0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double t = estimate[i].timestamp;
    while (j + 1 < truth.size() &&
           std::abs(truth[j + 1].timestamp - t) <= std::abs(truth[j].timestamp - t)) {
      ++j;
    }
    if (std::abs(truth[j].timestamp - t) <= options.match_tolerance) pairs.emplace_back(i, j);
  }
  if (pairs.empty()) throw Error(ErrorCode::kNoOverlap, "no timestamps within tolerance");

  Mat3 r_align = Mat3::Identity();
  Vec3 p_est0 = Vec3::Zero();
  Vec3 p_true0 = Vec3::Zero();
  if (options.align_first_pose) {
    const auto& e0 = estimate[pairs.front().first];
    const auto& g0 = truth[pairs.front().second];
    r_align = g0.attitude * e0.attitude.transpose();
    p_est0 = e0.position;
    p_true0 = g0.position;
  }
  const Mat3 to_rfu = rfu_rotation(truth.front());

  ErrorReport rep;
  for (const auto& [i, k] : pairs) {
    const auto& e = estimate[i];
    const auto& g = truth[k];
    Vec3 p = e.position;
    Mat3 r = e.attitude;
    if (options.align_first_pose) {
      p = r_align * (p - p_est0) + p_true0;
      r = r_align * r;
    }
    const Vec3 d = to_rfu * (p - g.position);
    rep.timestamps.push_back(e.timestamp);
    rep.error_rfu.push_back(d);
    rep.translation_err.push_back(d.norm());
    rep.rotation_err.push_back(rotation_angle_between(r, g.attitude) * 180.0 / std::numbers::pi);
  }
  rep.translation = compute_stats(rep.translation_err);
  rep.rotation = compute_stats(rep.rotation_err);

  for (std::size_t k = pairs.front().second + 1; k <= pairs.back().second; ++k) {
    rep.trajectory_length += (truth[k].position - truth[k - 1].position).norm();
  }
  if (options.normalize_by_length && rep.trajectory_length > 0.0) {
    rep.normalized = true;
    const double l = rep.trajectory_length;
    auto scale = [](Stats s, double f) {
      s.max *= f;
      s.avg *= f;
      s.rms *= f;
      s.p95 *= f;
      return s;
    };
    rep.translation_pct = scale(rep.translation, 100.0 / l);
    rep.rotation_per_m = scale(rep.rotation, 1.0 / l);
  }
  return rep;
}

}  // namespace pogvins
