#include "nvmag/levenberg_marquardt.hpp"

#include <algorithm>
#include <cmath>

#include "nvmag/error.hpp"

namespace nvmag {

double LmResult::sigma(Eigen::Index j) const {
  if (covariance.size() == 0 || j >= covariance.rows()) return 0.0;
  return std::sqrt(std::max(0.0, covariance(j, j)));
}

LevenbergMarquardt::LevenbergMarquardt(ResidualFunction residual, Eigen::Index residual_count,
                                       LmOptions options)
    : residual_(std::move(residual)), m_(residual_count), options_(options) {
  if (m_ <= 0) throw_invalid("least squares: residual count must be positive");
}

double LevenbergMarquardt::step_for(const Eigen::VectorXd& p, Eigen::Index j) const {
  const double scale = (scale_.size() == p.size() && scale_(j) > 0.0)
                           ? scale_(j)
                           : std::max(std::abs(p(j)), 1e-12);
  return options_.jacobian_step * scale;
}

void LevenbergMarquardt::numeric_jacobian(const Eigen::VectorXd& p, Eigen::MatrixXd& jac) const {
  jac.resize(m_, p.size());
  Eigen::VectorXd rp(m_), rm(m_);
  Eigen::VectorXd q = p;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    const double h = step_for(p, j);
    q(j) = p(j) + h;
    residual_(q, rp);
    q(j) = p(j) - h;
    residual_(q, rm);
    q(j) = p(j);
    jac.col(j) = (rp - rm) / (2.0 * h);
  }
}

LmResult LevenbergMarquardt::minimize(const Eigen::VectorXd& start) const {
  const Eigen::Index n = start.size();
  LmResult out;
  out.params = start;

  Eigen::VectorXd r(m_), r_try(m_);
  residual_(out.params, r);
  if (!r.allFinite()) throw_numerical("least squares: non-finite residual at start point");
  double cost = r.squaredNorm();

  Eigen::MatrixXd jac;
  double lambda = options_.initial_lambda;
  bool need_jacobian = true;
  Eigen::MatrixXd jtj;
  Eigen::VectorXd jtr;

  int it = 0;
  for (; it < options_.max_iterations; ++it) {
    if (cost == 0.0) {
      out.converged = true;
      out.message = "zero residual";
      break;
    }
    if (need_jacobian) {
      if (jacobian_) {
        jacobian_(out.params, jac);
      } else {
        numeric_jacobian(out.params, jac);
      }
      jtj = jac.transpose() * jac;
      jtr = jac.transpose() * r;
      need_jacobian = false;
    }

    Eigen::MatrixXd a = jtj;
    for (Eigen::Index j = 0; j < n; ++j) a(j, j) += lambda * std::max(jtj(j, j), 1e-300);
    Eigen::VectorXd delta = a.ldlt().solve(-jtr);
    if (!delta.allFinite()) {
      lambda *= 10.0;
      if (lambda > 1e20) {
        out.message = "damping diverged";
        break;
      }
      continue;
    }

    Eigen::VectorXd trial = out.params + delta;
    residual_(trial, r_try);
    const double cost_try = r_try.allFinite() ? r_try.squaredNorm() : HUGE_VAL;

    if (cost_try < cost) {
      const double rel = (cost - cost_try) / cost;
      out.params = trial;
      r = r_try;
      cost = cost_try;
      need_jacobian = true;
      lambda = std::max(lambda / 10.0, 1e-15);
      if (rel < options_.relative_cost_tolerance) {
        out.converged = true;
        out.message = "relative cost change below tolerance";
        ++it;
        break;
      }
    } else {
      lambda *= 10.0;
      if (lambda > 1e20) {
        // No descent direction left at this point: a stationary point.
        out.converged = true;
        out.message = "no further decrease";
        break;
      }
    }
  }
  if (!out.converged && out.message.empty()) out.message = "iteration limit reached";

  out.cost = cost;
  out.iterations = it;

  if (jacobian_) {
    jacobian_(out.params, jac);
  } else {
    numeric_jacobian(out.params, jac);
  }
  jtj = jac.transpose() * jac;
  const Eigen::Index dof = m_ - n;
  // Equilibrate first; parameters can differ in scale by many decades.
  Eigen::VectorXd d = jtj.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd scaled = d.asDiagonal() * jtj * d.asDiagonal();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(scaled);
  if (dof > 0 && lu.isInvertible()) {
    out.covariance = d.asDiagonal() * lu.inverse() * d.asDiagonal();
    out.covariance *= cost / static_cast<double>(dof);
  }
  return out;
}

}  // namespace nvmag
