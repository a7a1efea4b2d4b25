#pragma once

// Training and evaluation objectives. Chamfer distances come in two forms:
//   CD-T(P,Q) = L_PQ + L_QP
//   CD-P(P,Q) = (sqrt(L_PQ + eps) + sqrt(L_QP + eps)) / 2
// with L_PQ the mean over P of the squared distance to the nearest point of
// Q. The eps = 1e-12 clamp inside the square root keeps the gradient finite
// at the exact optimum. Feature matching is the Euclidean distance between
// codewords, summed over a batch, with the same clamp.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "asfm/autodiff.hpp"
#include "asfm/core.hpp"
#include "asfm/geom.hpp"
#include "asfm/kdtree.hpp"
#include "asfm/tensor.hpp"

namespace asfm::losses {

inline constexpr double kSqrtEps = 1e-12;

// ---- value-only Chamfer core --------------------------------------------------

struct ChamferMeans {
  double l_pq = 0.0, l_qp = 0.0;
  std::vector<std::size_t> nn_pq;  // for each p, index of nearest q
  std::vector<std::size_t> nn_qp;  // for each q, index of nearest p
};

inline ChamferMeans chamfer_means(const PointCloud& p, const PointCloud& q) {
  require_valid(p, "chamfer(P)");
  require_valid(q, "chamfer(Q)");
  ChamferMeans out;
  out.nn_pq.resize(p.size());
  out.nn_qp.resize(q.size());
  const geom::NNIndex qi(q);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const geom::NNResult r = qi.nearest(p[i]);
    out.nn_pq[i] = r.index;
    out.l_pq += r.sqdist;
  }
  out.l_pq /= static_cast<double>(p.size());
  const geom::NNIndex pi(p);
  for (std::size_t i = 0; i < q.size(); ++i) {
    const geom::NNResult r = pi.nearest(q[i]);
    out.nn_qp[i] = r.index;
    out.l_qp += r.sqdist;
  }
  out.l_qp /= static_cast<double>(q.size());
  return out;
}

inline double cd_t_value(const PointCloud& p, const PointCloud& q) {
  const ChamferMeans m = chamfer_means(p, q);
  return m.l_pq + m.l_qp;
}

inline double cd_p_value(const PointCloud& p, const PointCloud& q) {
  const ChamferMeans m = chamfer_means(p, q);
  return (std::sqrt(m.l_pq + kSqrtEps) + std::sqrt(m.l_qp + kSqrtEps)) / 2.0;
}

// ---- differentiable nodes -------------------------------------------------------

namespace detail {

inline PointCloud cloud_of(const ad::VarPtr& t, const char* what) {
  if (t->val.rank() != 2 || t->val.dim(1) != 3)
    throw std::invalid_argument(std::string(what) + ": expected [N,3] tensor");
  if (t->val.dim(0) < 1) throw std::invalid_argument(std::string(what) + ": empty cloud");
  PointCloud c;
  const std::int64_t n = t->val.dim(0);
  c.points.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i)
    c.points.push_back({t->val.at(i * 3), t->val.at(i * 3 + 1), t->val.at(i * 3 + 2)});
  return c;
}

// d L_PQ / d p_i = 2 (p_i - q*)/Np at the forward pairing; the pairing itself
// is piecewise constant, so this is the exact gradient almost everywhere.
inline void accumulate_chamfer_grads(ad::Var& self, const ChamferMeans& m, double w_pq,
                                     double w_qp) {
  ad::Var& p = *self.parents[0];
  ad::Var& q = *self.parents[1];
  const double gy = self.grad.v[0];
  const std::int64_t np = p.val.dim(0), nq = q.val.dim(0);
  const double cp = 2.0 / static_cast<double>(np);
  const double cq = 2.0 / static_cast<double>(nq);
  if (p.requires_grad) {
    ad::Tensor& g = p.ensure_grad();
    for (std::int64_t i = 0; i < np; ++i) {
      const std::int64_t j = static_cast<std::int64_t>(m.nn_pq[static_cast<std::size_t>(i)]);
      for (int d = 0; d < 3; ++d)
        g.at(i * 3 + d) += gy * w_pq * cp * (p.val.at(i * 3 + d) - q.val.at(j * 3 + d));
    }
    for (std::int64_t j = 0; j < nq; ++j) {
      const std::int64_t i = static_cast<std::int64_t>(m.nn_qp[static_cast<std::size_t>(j)]);
      for (int d = 0; d < 3; ++d)
        g.at(i * 3 + d) += gy * w_qp * cq * (p.val.at(i * 3 + d) - q.val.at(j * 3 + d));
    }
  }
  if (q.requires_grad) {
    ad::Tensor& g = q.ensure_grad();
    for (std::int64_t j = 0; j < nq; ++j) {
      const std::int64_t i = static_cast<std::int64_t>(m.nn_qp[static_cast<std::size_t>(j)]);
      for (int d = 0; d < 3; ++d)
        g.at(j * 3 + d) += gy * w_qp * cq * (q.val.at(j * 3 + d) - p.val.at(i * 3 + d));
    }
    for (std::int64_t i = 0; i < np; ++i) {
      const std::int64_t j = static_cast<std::int64_t>(m.nn_pq[static_cast<std::size_t>(i)]);
      for (int d = 0; d < 3; ++d)
        g.at(j * 3 + d) += gy * w_pq * cp * (q.val.at(j * 3 + d) - p.val.at(i * 3 + d));
    }
  }
}

}  // namespace detail

inline ad::VarPtr cd_t(const ad::VarPtr& p, const ad::VarPtr& q) {
  const PointCloud pc = detail::cloud_of(p, "cd_t(P)");
  const PointCloud qc = detail::cloud_of(q, "cd_t(Q)");
  auto means = std::make_shared<ChamferMeans>(chamfer_means(pc, qc));
  const double value = means->l_pq + means->l_qp;
  return ad::make_op(ad::Tensor::scalar(value), {p, q}, [means](ad::Var& self) {
    detail::accumulate_chamfer_grads(self, *means, 1.0, 1.0);
  });
}

inline ad::VarPtr cd_p(const ad::VarPtr& p, const ad::VarPtr& q) {
  const PointCloud pc = detail::cloud_of(p, "cd_p(P)");
  const PointCloud qc = detail::cloud_of(q, "cd_p(Q)");
  auto means = std::make_shared<ChamferMeans>(chamfer_means(pc, qc));
  const double s_pq = std::sqrt(means->l_pq + kSqrtEps);
  const double s_qp = std::sqrt(means->l_qp + kSqrtEps);
  const double value = (s_pq + s_qp) / 2.0;
  // d/dL sqrt(L+eps)/2 = 1/(4 sqrt(L+eps))
  const double w_pq = 1.0 / (4.0 * s_pq);
  const double w_qp = 1.0 / (4.0 * s_qp);
  return ad::make_op(ad::Tensor::scalar(value), {p, q}, [means, w_pq, w_qp](ad::Var& self) {
    detail::accumulate_chamfer_grads(self, *means, w_pq, w_qp);
  });
}

// Sum over batch rows of the Euclidean distance between partial and complete
// codewords. Accepts [B, D] pairs or rank-1 [D] vectors (treated as B = 1).
inline ad::VarPtr feat_match(const ad::VarPtr& f_partial, const ad::VarPtr& f_complete) {
  if (!f_partial->val.same_shape(f_complete->val))
    throw std::invalid_argument("feat_match: codeword length mismatch " +
                                f_partial->val.shape_str() + " vs " +
                                f_complete->val.shape_str());
  std::int64_t b = 1, d = 0;
  if (f_partial->val.rank() == 1) {
    d = f_partial->val.dim(0);
  } else if (f_partial->val.rank() == 2) {
    b = f_partial->val.dim(0);
    d = f_partial->val.dim(1);
  } else {
    throw std::invalid_argument("feat_match: expected [B,D] or [D]");
  }
  auto dists = std::make_shared<std::vector<double>>(static_cast<std::size_t>(b), 0.0);
  double total = 0.0;
  for (std::int64_t i = 0; i < b; ++i) {
    double ss = 0.0;
    for (std::int64_t k = 0; k < d; ++k) {
      const double diff = f_partial->val.at(i * d + k) - f_complete->val.at(i * d + k);
      ss += diff * diff;
    }
    const double dist = std::sqrt(ss + kSqrtEps);
    (*dists)[static_cast<std::size_t>(i)] = dist;
    total += dist;
  }
  return ad::make_op(ad::Tensor::scalar(total), {f_partial, f_complete},
                     [b, d, dists](ad::Var& self) {
                       ad::Var& a = *self.parents[0];
                       ad::Var& c = *self.parents[1];
                       const double gy = self.grad.v[0];
                       for (std::int64_t i = 0; i < b; ++i) {
                         const double inv = 1.0 / (*dists)[static_cast<std::size_t>(i)];
                         for (std::int64_t k = 0; k < d; ++k) {
                           const double diff = a.val.at(i * d + k) - c.val.at(i * d + k);
                           if (a.requires_grad) a.ensure_grad().at(i * d + k) += gy * inv * diff;
                           if (c.requires_grad) c.ensure_grad().at(i * d + k) -= gy * inv * diff;
                         }
                       }
                     });
}

// ---- loss weights and schedule --------------------------------------------------

struct Weights {
  double alpha = 0.0, beta = 0.0, gamma = 0.0;
};

// Default schedule: alpha decays linearly 1.0 -> 0.1 over the first half of
// training, then stays flat; beta is constant; gamma ramps linearly
// 0.5 -> 1.0 over the whole run. All knobs are config-overridable.
struct LossSchedule {
  std::int64_t max_steps = 1;
  double alpha_start = 1.0, alpha_end = 0.1;
  double beta_value = 1.0;
  double gamma_start = 0.5, gamma_end = 1.0;

  Weights at(std::int64_t step) const {
    if (step < 0 || step > max_steps)
      throw std::invalid_argument("LossSchedule: step " + std::to_string(step) +
                                  " outside [0, " + std::to_string(max_steps) + "]");
    Weights w;
    const double half = static_cast<double>(max_steps) / 2.0;
    if (static_cast<double>(step) >= half || half == 0.0) {
      w.alpha = alpha_end;
    } else {
      const double t = static_cast<double>(step) / half;
      w.alpha = alpha_start + (alpha_end - alpha_start) * t;
    }
    w.beta = beta_value;
    const double tg = max_steps == 0 ? 1.0 : static_cast<double>(step) / static_cast<double>(max_steps);
    w.gamma = gamma_start + (gamma_end - gamma_start) * tg;
    if (w.alpha < 0 || w.beta < 0 || w.gamma < 0)
      throw std::invalid_argument("LossSchedule: negative weight");
    return w;
  }
};

inline double overall_loss_value(double feat, double cd_coarse, double cd_final,
                                 const LossSchedule& schedule, std::int64_t step) {
  const Weights w = schedule.at(step);
  return w.alpha * feat + w.beta * cd_coarse + w.gamma * cd_final;
}

inline ad::VarPtr overall_loss(const ad::VarPtr& feat, const ad::VarPtr& cd_coarse,
                               const ad::VarPtr& cd_final, const LossSchedule& schedule,
                               std::int64_t step) {
  const Weights w = schedule.at(step);
  return ad::add(ad::add(ad::scale(feat, w.alpha), ad::scale(cd_coarse, w.beta)),
                 ad::scale(cd_final, w.gamma));
}

}  // namespace asfm::losses
