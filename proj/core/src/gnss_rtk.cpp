#include "pogvins/gnss_rtk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pogvins/errors.hpp"
#include "pogvins/so3.hpp"

namespace pogvins {

void GnssObservation::validate() const {
  if (!(pseudorange > 1e7 && pseudorange < 5e7)) {
    throw Error(ErrorCode::kInvalidArgument,
                "pseudorange out of range for sat " + std::to_string(sat_id));
  }
  if (!(wavelength > 0.15 && wavelength < 0.30)) {
    throw Error(ErrorCode::kInvalidArgument,
                "wavelength out of range for sat " + std::to_string(sat_id));
  }
  if (!std::isfinite(carrier_phase) || !sat_position.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "non-finite GNSS observation");
  }
}

RangePrediction predict_range(const Vec3& position, const Mat3& attitude, const Vec3& lever_arm,
                              const Vec3& sat_position) {
  const Vec3 lever_world = attitude * lever_arm;
  const Vec3 d = position + lever_world - sat_position;
  RangePrediction out;
  out.range = d.norm();
  out.line_of_sight = d / out.range;
  // antenna_true = antenna_hat - dr - [R l_a]x phi
  out.jacobian.leftCols<3>() = -out.line_of_sight.transpose();
  out.jacobian.rightCols<3>() = -out.line_of_sight.transpose() * skew(lever_world);
  return out;
}

DdEpoch double_difference(const GnssEpoch& rover, const GnssEpoch& base, const GnssNoise& noise) {
  struct Common {
    const GnssObservation* r;
    const GnssObservation* b;
  };
  std::vector<Common> common;
  for (const GnssObservation& r : rover.observations) {
    if (r.elevation < noise.min_elevation) continue;
    for (const GnssObservation& b : base.observations) {
      if (b.sat_id == r.sat_id) {
        common.push_back({&r, &b});
        break;
      }
    }
  }
  if (common.size() < 2) {
    throw Error(ErrorCode::kInsufficientSatellites,
                std::to_string(common.size()) + " common satellites at t=" +
                    std::to_string(rover.timestamp));
  }
  std::sort(common.begin(), common.end(),
            [](const Common& a, const Common& b) { return a.r->sat_id < b.r->sat_id; });
  std::size_t ref = 0;
  for (std::size_t k = 1; k < common.size(); ++k) {
    if (common[k].r->elevation > common[ref].r->elevation) ref = k;
  }
  const double lambda = common[ref].r->wavelength;
  for (const Common& c : common) {
    if (c.r->wavelength != lambda || c.b->wavelength != lambda) {
      throw Error(ErrorCode::kInvalidArgument, "mixed wavelengths in one epoch");
    }
  }

  auto sd_var = [&](const Common& c, double sigma) {
    const double sr = sigma / std::sin(std::max(c.r->elevation, noise.min_elevation));
    const double sb = sigma / std::sin(std::max(c.b->elevation, noise.min_elevation));
    return sr * sr + sb * sb;
  };

  const Common& k = common[ref];
  const double sd_code_ref = k.r->pseudorange - k.b->pseudorange;
  const double sd_phase_ref = k.r->carrier_phase - k.b->carrier_phase;

  DdEpoch out;
  out.timestamp = rover.timestamp;
  out.ref_sat_id = k.r->sat_id;
  const Eigen::Index m = static_cast<Eigen::Index>(common.size()) - 1;
  out.code_covariance = MatX::Constant(m, m, sd_var(k, noise.code_sigma));
  out.phase_covariance = MatX::Constant(m, m, sd_var(k, noise.phase_sigma));
  Eigen::Index a = 0;
  for (std::size_t s = 0; s < common.size(); ++s) {
    if (s == ref) continue;
    const Common& c = common[s];
    DdObservation dd;
    dd.sat_id = c.r->sat_id;
    dd.ref_sat_id = k.r->sat_id;
    dd.wavelength = lambda;
    dd.dd_pseudorange = (c.r->pseudorange - c.b->pseudorange) - sd_code_ref;
    dd.dd_phase = ((c.r->carrier_phase - c.b->carrier_phase) - sd_phase_ref) * lambda;
    dd.sat_position = c.r->sat_position;
    dd.ref_sat_position = k.r->sat_position;
    dd.base_sat_position = c.b->sat_position;
    dd.base_ref_sat_position = k.b->sat_position;
    out.code_covariance(a, a) += sd_var(c, noise.code_sigma);
    out.phase_covariance(a, a) += sd_var(c, noise.phase_sigma);
    out.obs.push_back(dd);
    ++a;
  }
  return out;
}

std::optional<SatId> AmbiguitySet::reference() const {
  if (entries.empty()) return std::nullopt;
  return entries.begin()->first.second;
}

void AmbiguitySet::validate(const FilterState& fs) const {
  std::vector<bool> seen(static_cast<std::size_t>(fs.ambiguities.size()), false);
  if (static_cast<Eigen::Index>(entries.size()) != fs.ambiguities.size()) {
    throw Error(ErrorCode::kInvalidArgument, "ambiguity set and state sizes differ");
  }
  for (const auto& [key, e] : entries) {
    if (key.first == key.second) {
      throw Error(ErrorCode::kInvalidArgument, "ambiguity pair with sat == ref");
    }
    if (e.state_index < 0 || e.state_index >= fs.ambiguities.size() ||
        seen[static_cast<std::size_t>(e.state_index)]) {
      throw Error(ErrorCode::kInvalidArgument, "ambiguity state index not 1-1");
    }
    seen[static_cast<std::size_t>(e.state_index)] = true;
  }
}

MatX reference_switch_matrix(Eigen::Index size, Eigen::Index new_ref_index) {
  MatX t = MatX::Identity(size, size);
  t.col(new_ref_index).array() -= 1.0;
  t(new_ref_index, new_ref_index) = -1.0;
  return t;
}

namespace {

constexpr double kFreshAmbiguityInflation = 100.0;

void transform_ambiguities(FilterState& fs, const MatX& t) {
  const Eigen::Index off = fs.ambiguity_offset();
  const Eigen::Index na = fs.ambiguities.size();
  fs.ambiguities = t * fs.ambiguities;
  MatX& p = fs.covariance;
  const MatX cross = p.block(0, off, off, na) * t.transpose();
  p.block(0, off, off, na) = cross;
  p.block(off, 0, na, off) = cross.transpose();
  const MatX aa = t * p.block(off, off, na, na) * t.transpose();
  p.block(off, off, na, na) = 0.5 * (aa + aa.transpose());
}

void reindex(AmbiguitySet& amb, const std::vector<Eigen::Index>& removed) {
  for (auto& entry : amb.entries) {
    Eigen::Index shift = 0;
    for (Eigen::Index r : removed) {
      if (r < entry.second.state_index) ++shift;
    }
    entry.second.state_index -= shift;
  }
}

}  // namespace

AmbiguityChanges manage_ambiguities(AmbiguitySet& amb, const DdEpoch& dd, FilterState& fs) {
  AmbiguityChanges ch;
  const SatId new_ref = dd.ref_sat_id;
  const std::optional<SatId> old_ref = amb.reference();

  if (old_ref && *old_ref != new_ref) {
    auto pivot = amb.entries.find({new_ref, *old_ref});
    if (pivot == amb.entries.end()) {
      std::vector<Eigen::Index> all;
      for (const auto& e : amb.entries) all.push_back(e.second.state_index);
      remove_ambiguity_states(fs, all);
      ch.removed += static_cast<int>(amb.entries.size());
      amb.entries.clear();
      ch.reset = true;
    } else {
      const Eigen::Index pivot_index = pivot->second.state_index;
      transform_ambiguities(fs, reference_switch_matrix(fs.ambiguities.size(), pivot_index));
      std::map<std::pair<SatId, SatId>, AmbiguityEntry> next;
      for (const auto& [key, e] : amb.entries) {
        AmbiguityEntry ne;
        ne.state_index = e.state_index;
        ne.float_value = fs.ambiguities(e.state_index);
        const SatId sat = key.first == new_ref ? *old_ref : key.first;
        next.emplace(std::make_pair(sat, new_ref), ne);
      }
      // Integers are preserved by the mapping, so held fixes carry over.
      const auto& old_pivot_fix = pivot->second.fixed_value;
      for (const auto& [key, e] : amb.entries) {
        const SatId sat = key.first == new_ref ? *old_ref : key.first;
        AmbiguityEntry& ne = next.at({sat, new_ref});
        if (e.fixed_value && old_pivot_fix) {
          ne.fixed_value = key.first == new_ref ? -*old_pivot_fix
                                                : *e.fixed_value - *old_pivot_fix;
        }
      }
      amb.entries = std::move(next);
      ch.reference_switched = true;
    }
  }

  // Drop pairs whose satellite is no longer differenced.
  std::vector<Eigen::Index> removed;
  for (auto it = amb.entries.begin(); it != amb.entries.end();) {
    const bool present = std::any_of(dd.obs.begin(), dd.obs.end(), [&](const DdObservation& o) {
      return o.sat_id == it->first.first && o.ref_sat_id == it->first.second;
    });
    if (!present) {
      removed.push_back(it->second.state_index);
      it = amb.entries.erase(it);
    } else {
      ++it;
    }
  }
  if (!removed.empty()) {
    remove_ambiguity_states(fs, removed);
    reindex(amb, removed);
    ch.removed += static_cast<int>(removed.size());
  }

  // Append new pairs, initialized from phase minus code. The same code rows enter the
  // update at this epoch, so the prior is widened until its share of that information is
  // negligible.
  std::vector<Eigen::Index> fresh;
  for (std::size_t a = 0; a < dd.obs.size(); ++a) {
    const DdObservation& o = dd.obs[a];
    if (amb.entries.count({o.sat_id, o.ref_sat_id}) == 0) fresh.push_back(static_cast<Eigen::Index>(a));
  }
  if (!fresh.empty()) {
    const Eigen::Index na = static_cast<Eigen::Index>(fresh.size());
    VecX values(na);
    MatX cov(na, na);
    for (Eigen::Index u = 0; u < na; ++u) {
      const DdObservation& o = dd.obs[static_cast<std::size_t>(fresh[static_cast<std::size_t>(u)])];
      values(u) = (o.dd_phase - o.dd_pseudorange) / o.wavelength;
      for (Eigen::Index v = 0; v < na; ++v) {
        const Eigen::Index ru = fresh[static_cast<std::size_t>(u)];
        const Eigen::Index rv = fresh[static_cast<std::size_t>(v)];
        cov(u, v) = kFreshAmbiguityInflation *
                    (dd.code_covariance(ru, rv) + dd.phase_covariance(ru, rv)) /
                    (o.wavelength * o.wavelength);
      }
    }
    const Eigen::Index first = fs.ambiguities.size();
    append_ambiguity_states(fs, values, cov.diagonal());
    fs.covariance.bottomRightCorner(na, na) = cov;
    for (Eigen::Index u = 0; u < na; ++u) {
      const DdObservation& o = dd.obs[static_cast<std::size_t>(fresh[static_cast<std::size_t>(u)])];
      AmbiguityEntry e;
      e.float_value = values(u);
      e.state_index = first + u;
      amb.entries.emplace(std::make_pair(o.sat_id, o.ref_sat_id), e);
    }
    ch.added = static_cast<int>(na);
  }
  return ch;
}

double igg3_weight(double v, double k0, double k1) {
  if (!(k0 < k1) || !(k0 > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "IGG-III needs 0 < k0 < k1");
  }
  const double a = std::abs(v);
  if (a <= k0) return 1.0;
  if (a >= k1) return 0.0;
  const double t = (k1 - a) / (k1 - k0);
  return (k0 / a) * t * t;
}

DdLinearization linearize_dd(const FilterState& fs, const DdEpoch& dd, const AmbiguitySet& amb,
                             const RtkOptions& opts) {
  const Eigen::Index m = static_cast<Eigen::Index>(dd.obs.size());
  DdLinearization out;
  out.code_residual.resize(m);
  out.phase_residual.resize(m);
  out.code_jacobian = MatX::Zero(m, fs.dim());
  out.phase_jacobian = MatX::Zero(m, fs.dim());
  const Eigen::Index amb_off = fs.ambiguity_offset();
  for (Eigen::Index a = 0; a < m; ++a) {
    const DdObservation& o = dd.obs[static_cast<std::size_t>(a)];
    const RangePrediction rs = predict_range(fs.nav, opts.lever_arm, o.sat_position);
    const RangePrediction rk = predict_range(fs.nav, opts.lever_arm, o.ref_sat_position);
    const double bs = (opts.base_position - o.base_sat_position).norm();
    const double bk = (opts.base_position - o.base_ref_sat_position).norm();
    const double geom = (rs.range - rk.range) - (bs - bk);
    const Eigen::Matrix<double, 1, 6> j = rs.jacobian - rk.jacobian;
    out.code_residual(a) = geom - o.dd_pseudorange;
    out.code_jacobian.block<1, 3>(a, kPos) = j.leftCols<3>();
    out.code_jacobian.block<1, 3>(a, kAtt) = j.rightCols<3>();
    out.phase_jacobian.row(a) = out.code_jacobian.row(a);
    auto it = amb.entries.find({o.sat_id, o.ref_sat_id});
    if (it != amb.entries.end()) {
      const Eigen::Index idx = it->second.state_index;
      out.phase_residual(a) = geom + o.wavelength * fs.ambiguities(idx) - o.dd_phase;
      out.phase_jacobian(a, amb_off + idx) = o.wavelength;
    } else {
      out.phase_residual(a) = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

namespace {

struct RowSet {
  std::vector<Eigen::Index> code;   // indices into dd.obs
  std::vector<Eigen::Index> phase;
};

}  // namespace

RtkReport rtk_update(FilterState& fs, const DdEpoch& dd, const AmbiguitySet& amb,
                     const RtkOptions& opts) {
  RtkReport rep;
  const Eigen::Index m = static_cast<Eigen::Index>(dd.obs.size());
  rep.code_weights.assign(static_cast<std::size_t>(m), 0.0);
  rep.phase_weights.assign(static_cast<std::size_t>(m), 0.0);
  if (m == 0) return rep;

  RowSet rows;
  for (Eigen::Index a = 0; a < m; ++a) {
    const DdObservation& o = dd.obs[static_cast<std::size_t>(a)];
    if (opts.use_code) rows.code.push_back(a);
    if (opts.use_phase && amb.entries.count({o.sat_id, o.ref_sat_id}) != 0) rows.phase.push_back(a);
  }
  const Eigen::Index nc = static_cast<Eigen::Index>(rows.code.size());
  const Eigen::Index np = static_cast<Eigen::Index>(rows.phase.size());
  const Eigen::Index nr = nc + np;
  if (nr == 0) return rep;

  MatX r_full = MatX::Zero(nr, nr);
  r_full.topLeftCorner(nc, nc) = dd.code_covariance(rows.code, rows.code);
  r_full.bottomRightCorner(np, np) = dd.phase_covariance(rows.phase, rows.phase);

  const FilterState prior = fs;
  const Eigen::Index n = fs.dim();
  VecX delta = VecX::Zero(n);
  VecX weights = VecX::Ones(nr);
  MatX gain_k;
  MatX gain_h;
  bool any = false;

  for (int iter = 0; iter < std::max(1, opts.max_iterations); ++iter) {
    FilterState at = prior;
    if (iter > 0) apply_correction(at, delta);
    const DdLinearization lin = linearize_dd(at, dd, amb, opts);
    VecX r(nr);
    MatX h(nr, n);
    r.head(nc) = lin.code_residual(rows.code);
    r.tail(np) = lin.phase_residual(rows.phase);
    h.topRows(nc) = lin.code_jacobian(rows.code, Eigen::all);
    h.bottomRows(np) = lin.phase_jacobian(rows.phase, Eigen::all);

    VecX new_weights = VecX::Ones(nr);
    if (opts.robust) {
      const MatX s = h * prior.covariance * h.transpose() + r_full;
      for (Eigen::Index k = 0; k < nr; ++k) {
        new_weights(k) = igg3_weight(r(k) / std::sqrt(s(k, k)), opts.k0, opts.k1);
      }
    }
    std::vector<Eigen::Index> keep;
    for (Eigen::Index k = 0; k < nr; ++k) {
      if (new_weights(k) > 0.0) keep.push_back(k);
    }
    weights = new_weights;
    rep.iterations = iter + 1;
    if (keep.empty()) {
      any = false;
      break;
    }
    any = true;
    // Down-weighting inflates the noise: R_w = W^-1/2 R W^-1/2.
    const VecX inv_sqrt_w = weights(keep).cwiseSqrt().cwiseInverse();
    MatX rw = inv_sqrt_w.asDiagonal() * r_full(keep, keep) * inv_sqrt_w.asDiagonal();
    Eigen::LLT<MatX> chol(rw);
    if (chol.info() != Eigen::Success) {
      throw Error(ErrorCode::kSingularInnovation, "DD noise covariance not positive definite");
    }
    WhitenedRows w;
    w.residual = chol.matrixL().solve(VecX(r(keep)));
    w.jacobian = chol.matrixL().solve(MatX(h(keep, Eigen::all)));
    gain_h = w.jacobian;
    MatX p = prior.covariance;
    gain_k = joseph_update(p, w.jacobian);
    const VecX next = gain_k * (w.jacobian * delta - w.residual);
    const double step = (next - delta).norm();
    delta = next;
    rep.rows_used = static_cast<int>(keep.size());
    if (step < opts.convergence_tol && iter > 0) {
      fs = prior;
      fs.covariance = std::move(p);
      apply_correction(fs, delta);
      break;
    }
    fs = prior;
    fs.covariance = std::move(p);
    apply_correction(fs, delta);
  }

  for (Eigen::Index k = 0; k < nc; ++k) {
    rep.code_weights[static_cast<std::size_t>(rows.code[static_cast<std::size_t>(k)])] = weights(k);
  }
  for (Eigen::Index k = 0; k < np; ++k) {
    rep.phase_weights[static_cast<std::size_t>(rows.phase[static_cast<std::size_t>(k)])] =
        weights(nc + k);
  }
  rep.rows_rejected = static_cast<int>((weights.array() == 0.0).count());
  if (!any) {
    fs = prior;
    rep.status = UpdateStatus::kAllObservationsRejected;
    rep.correction = VecX::Zero(n);
    return rep;
  }
  rep.status = UpdateStatus::kApplied;
  rep.correction = delta;
  rep.correction_norm = delta.norm();
  return rep;
}

FixReport resolve_ambiguities(FilterState& fs, AmbiguitySet& amb, double ratio_threshold,
                              double hold_variance) {
  FixReport rep;
  const Eigen::Index na = fs.ambiguities.size();
  if (na == 0) return rep;
  const Eigen::Index off = fs.ambiguity_offset();
  MatX q = fs.covariance.block(off, off, na, na);
  q = 0.5 * (q + q.transpose()).eval();
  rep.attempted = true;
  LambdaResult lr;
  try {
    lr = lambda_fix(fs.ambiguities, q, ratio_threshold);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kNotPositiveDefinite) return rep;
    throw;
  }
  rep.ratio = lr.ratio;
  if (!lr.accepted) return rep;

  VecX fixed(na);
  for (Eigen::Index k = 0; k < na; ++k) fixed(k) = static_cast<double>(lr.fixed[static_cast<std::size_t>(k)]);
  const VecX prior_diag = fs.covariance.diagonal();
  // Condition every state on a = fixed: dx = P_xa Q^-1 (fixed - a_hat).
  Eigen::LDLT<MatX> ldlt(q);
  const MatX p_xa = fs.covariance.middleCols(off, na);
  const VecX dx = p_xa * ldlt.solve(VecX(fixed - fs.ambiguities));
  MatX p = fs.covariance - p_xa * ldlt.solve(MatX(p_xa.transpose()));
  p = 0.5 * (p + p.transpose()).eval();
  p.middleCols(off, na).setZero();
  p.middleRows(off, na).setZero();
  for (Eigen::Index k = 0; k < na; ++k) {
    p(off + k, off + k) = std::min(hold_variance, prior_diag(off + k));
  }
  // Guard against tiny negative diagonals from round-off.
  for (Eigen::Index k = 0; k < p.rows(); ++k) {
    p(k, k) = std::max(p(k, k), 0.0);
  }
  fs.covariance = std::move(p);
  apply_correction(fs, dx);
  fs.ambiguities = fixed;  // exact integers after the correction
  for (auto& entry : amb.entries) {
    const Eigen::Index idx = entry.second.state_index;
    entry.second.fixed_value = lr.fixed[static_cast<std::size_t>(idx)];
    entry.second.float_value = fs.ambiguities(idx);
  }
  rep.accepted = true;
  rep.fixed_count = static_cast<int>(na);
  return rep;
}

Vec3 solve_dd_position(const DdEpoch& dd, const Vec3& base_position, const Vec3& initial_guess,
                       int max_iterations) {
  const Eigen::Index m = static_cast<Eigen::Index>(dd.obs.size());
  if (m < 3) {
    throw Error(ErrorCode::kInsufficientSatellites, "DD position needs >= 4 satellites");
  }
  Eigen::LLT<MatX> chol(dd.code_covariance);
  if (chol.info() != Eigen::Success) {
    throw Error(ErrorCode::kNotPositiveDefinite, "DD code covariance");
  }
  Vec3 x = initial_guess;
  for (int iter = 0; iter < max_iterations; ++iter) {
    VecX r(m);
    MatX h(m, 3);
    for (Eigen::Index a = 0; a < m; ++a) {
      const DdObservation& o = dd.obs[static_cast<std::size_t>(a)];
      const Vec3 es = x - o.sat_position;
      const Vec3 ek = x - o.ref_sat_position;
      const double geom = (es.norm() - ek.norm()) - ((base_position - o.base_sat_position).norm() -
                                                     (base_position - o.base_ref_sat_position).norm());
      r(a) = o.dd_pseudorange - geom;
      h.row(a) = (es.normalized() - ek.normalized()).transpose();
    }
    const MatX hw = chol.matrixL().solve(h);
    const VecX rw = chol.matrixL().solve(r);
    const Vec3 step = (hw.transpose() * hw).ldlt().solve(hw.transpose() * rw);
    x += step;
    if (step.norm() < 1e-6) return x;
  }
  return x;
}

}  // namespace pogvins
