#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/LU>

#include "pogvins/errors.hpp"
#include "pogvins/gnss_rtk.hpp"

namespace pogvins {

namespace {

// Q = L^T diag(D) L with L unit lower triangular.
bool ltdl(const MatX& q, MatX& l, VecX& d) {
  const Eigen::Index n = q.rows();
  MatX a = q;
  l = MatX::Zero(n, n);
  d = VecX::Zero(n);
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    d(i) = a(i, i);
    if (!(d(i) > 0.0)) return false;
    const double s = std::sqrt(d(i));
    for (Eigen::Index j = 0; j <= i; ++j) l(i, j) = a(i, j) / s;
    for (Eigen::Index j = 0; j <= i - 1; ++j) {
      for (Eigen::Index k = 0; k <= j; ++k) a(j, k) -= l(i, k) * l(i, j);
    }
    for (Eigen::Index j = 0; j <= i; ++j) l(i, j) /= l(i, i);
  }
  return true;
}

void gauss(MatX& l, MatX& z, Eigen::Index i, Eigen::Index j) {
  const double mu = std::round(l(i, j));
  if (mu == 0.0) return;
  const Eigen::Index n = l.rows();
  for (Eigen::Index k = i; k < n; ++k) l(k, j) -= mu * l(k, i);
  for (Eigen::Index k = 0; k < n; ++k) z(k, j) -= mu * z(k, i);
}

void permute(MatX& l, VecX& d, Eigen::Index j, double del, MatX& z) {
  const Eigen::Index n = l.rows();
  const double eta = d(j) / del;
  const double lam = d(j + 1) * l(j + 1, j) / del;
  d(j) = eta * d(j + 1);
  d(j + 1) = del;
  for (Eigen::Index k = 0; k <= j - 1; ++k) {
    const double a0 = l(j, k);
    const double a1 = l(j + 1, k);
    l(j, k) = -l(j + 1, j) * a0 + a1;
    l(j + 1, k) = eta * a0 + lam * a1;
  }
  l(j + 1, j) = lam;
  for (Eigen::Index k = j + 2; k < n; ++k) std::swap(l(k, j), l(k, j + 1));
  for (Eigen::Index k = 0; k < n; ++k) std::swap(z(k, j), z(k, j + 1));
}

void reduction(MatX& l, VecX& d, MatX& z) {
  const Eigen::Index n = l.rows();
  Eigen::Index j = n - 2;
  Eigen::Index k = n - 2;
  while (j >= 0) {
    if (j <= k) {
      for (Eigen::Index i = j + 1; i < n; ++i) gauss(l, z, i, j);
    }
    const double del = d(j) + l(j + 1, j) * l(j + 1, j) * d(j + 1);
    if (del + 1e-6 < d(j + 1)) {
      permute(l, d, j, del, z);
      k = j;
      j = n - 2;
    } else {
      --j;
    }
  }
}

double sgn(double x) { return x <= 0.0 ? -1.0 : 1.0; }

// Depth-first search for the m best integer vectors in the decorrelated space.
bool search(const MatX& l, const VecX& d, const VecX& zs, int m, MatX& zn, VecX& s) {
  constexpr int kLoopMax = 100000;
  const Eigen::Index n = l.rows();
  MatX big_s = MatX::Zero(n, n);
  VecX dist = VecX::Zero(n);
  VecX zb = VecX::Zero(n);
  VecX z = VecX::Zero(n);
  VecX step = VecX::Zero(n);
  zn = MatX::Zero(n, m);
  s = VecX::Zero(m);

  int nn = 0;
  int imax = 0;
  double maxdist = std::numeric_limits<double>::max();
  Eigen::Index k = n - 1;
  zb(k) = zs(k);
  z(k) = std::round(zb(k));
  double y = zb(k) - z(k);
  step(k) = sgn(y);
  int c = 0;
  for (; c < kLoopMax; ++c) {
    const double newdist = dist(k) + y * y / d(k);
    if (newdist < maxdist) {
      if (k != 0) {
        dist(--k) = newdist;
        for (Eigen::Index i = 0; i <= k; ++i) {
          big_s(k, i) = big_s(k + 1, i) + (z(k + 1) - zb(k + 1)) * l(k + 1, i);
        }
        zb(k) = zs(k) + big_s(k, k);
        z(k) = std::round(zb(k));
        y = zb(k) - z(k);
        step(k) = sgn(y);
      } else {
        if (nn < m) {
          if (nn == 0 || newdist > s(imax)) imax = nn;
          zn.col(nn) = z;
          s(nn++) = newdist;
        } else {
          if (newdist < s(imax)) {
            zn.col(imax) = z;
            s(imax) = newdist;
            for (int i = imax = 0; i < m; ++i) {
              if (s(imax) < s(i)) imax = i;
            }
          }
          maxdist = s(imax);
        }
        z(0) += step(0);
        y = zb(0) - z(0);
        step(0) = -step(0) - sgn(step(0));
      }
    } else {
      if (k == n - 1) break;
      ++k;
      z(k) += step(k);
      y = zb(k) - z(k);
      step(k) = -step(k) - sgn(step(k));
    }
  }
  // Order candidates by cost.
  for (int i = 0; i < m - 1; ++i) {
    for (int j = i + 1; j < m; ++j) {
      if (s(i) <= s(j)) continue;
      std::swap(s(i), s(j));
      zn.col(i).swap(zn.col(j));
    }
  }
  return c < kLoopMax && nn == m;
}

std::vector<long> to_integers(const VecX& v) {
  std::vector<long> out(static_cast<std::size_t>(v.size()));
  for (Eigen::Index k = 0; k < v.size(); ++k) out[static_cast<std::size_t>(k)] = std::lround(v(k));
  return out;
}

}  // namespace

LambdaResult lambda_fix(const VecX& float_amb, const MatX& q_amb, double ratio_threshold) {
  const Eigen::Index n = float_amb.size();
  if (n == 0 || q_amb.rows() != n || q_amb.cols() != n) {
    throw Error(ErrorCode::kInvalidArgument, "lambda_fix dimension mismatch");
  }
  if (!(q_amb - q_amb.transpose()).isZero(1e-9 * (1.0 + q_amb.cwiseAbs().maxCoeff()))) {
    throw Error(ErrorCode::kNotPositiveDefinite, "ambiguity covariance not symmetric");
  }
  MatX l;
  VecX d;
  if (!ltdl(q_amb, l, d)) {
    throw Error(ErrorCode::kNotPositiveDefinite, "ambiguity covariance not positive definite");
  }
  MatX z = MatX::Identity(n, n);
  reduction(l, d, z);

  // Unimodularity of the decorrelating transform.
  if (!(z.array() == z.array().round()).all() ||
      std::abs(std::abs(z.determinant()) - 1.0) > 1e-6) {
    throw Error(ErrorCode::kNonConvergence, "decorrelation lost unimodularity");
  }

  // Shift to the integer part so the search runs on small fractional values.
  const VecX base = float_amb.array().round().matrix();
  const VecX zs = z.transpose() * (float_amb - base);
  MatX e;
  VecX s;
  const bool ok = search(l, d, zs, 2, e, s);
  if (!ok) {
    throw Error(ErrorCode::kNonConvergence, "integer search exceeded its loop bound");
  }
  const MatX f = z.transpose().fullPivLu().solve(e);

  LambdaResult out;
  out.z_transform = z;
  out.fixed = to_integers(f.col(0) + base);
  out.second = to_integers(f.col(1) + base);
  out.ratio = s(0) > 0.0 ? s(1) / s(0) : std::numeric_limits<double>::infinity();
  out.accepted = out.ratio >= ratio_threshold;
  return out;
}

}  // namespace pogvins
