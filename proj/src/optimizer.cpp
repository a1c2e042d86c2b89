#include "mcs/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

namespace mcs {

void SolverSettings::validate() const {
  if (initial_radius <= 0.0 || min_radius <= 0.0 || relative_decrease <= 0.0 ||
      gradient_tolerance <= 0.0)
    throw std::runtime_error("solver settings: thresholds must be positive");
  if (max_inner_iterations < 1)
    throw std::runtime_error("solver settings: need at least one iteration");
  if (outer_refreshes < 1)
    throw std::runtime_error("solver settings: need at least one refresh");
}

DoglegSolver::DoglegSolver(const Eigen::SparseMatrix<double>& curvature,
                           double damping)
    : damping_(damping) {
  damped_ = curvature;
  Eigen::SparseMatrix<double> identity(curvature.rows(), curvature.cols());
  identity.setIdentity();
  damped_ += identity * damping;
  ldlt_.compute(damped_);
  gn_ok_ = ldlt_.info() == Eigen::Success;
}

void DoglegSolver::refactorize(const Eigen::SparseMatrix<double>& curvature) {
  Eigen::SparseMatrix<double> damped = curvature;
  Eigen::SparseMatrix<double> identity(curvature.rows(), curvature.cols());
  identity.setIdentity();
  damped += identity * damping_;
  const bool same_pattern = damped.rows() == damped_.rows() &&
                            damped.nonZeros() == damped_.nonZeros();
  damped_ = std::move(damped);
  if (same_pattern)
    ldlt_.factorize(damped_);  // reuses the symbolic analysis
  else
    ldlt_.compute(damped_);
  gn_ok_ = ldlt_.info() == Eigen::Success;
}

VectorXd DoglegSolver::step(const VectorXd& gradient,
                            double trust_radius) const {
  const double gnorm = gradient.norm();
  if (gnorm == 0.0) return VectorXd::Zero(gradient.size());

  VectorXd newton;
  bool use_newton = gn_ok_;
  if (use_newton) {
    newton = ldlt_.solve(-gradient);
    use_newton = newton.allFinite();
  }
  if (use_newton && newton.norm() <= trust_radius) return newton;

  const double ghg = gradient.dot(damped_ * gradient);
  if (ghg <= 0.0 || !std::isfinite(ghg))
    return gradient * (-trust_radius / gnorm);

  const VectorXd cauchy = gradient * (-gradient.squaredNorm() / ghg);
  const double cauchy_norm = cauchy.norm();
  if (!use_newton || cauchy_norm >= trust_radius)
    return cauchy * std::min(1.0, trust_radius / cauchy_norm);

  // Walk from the Cauchy point toward the Newton point until the boundary.
  const VectorXd leg = newton - cauchy;
  const double a = leg.squaredNorm();
  const double b = 2.0 * cauchy.dot(leg);
  const double c = cauchy_norm * cauchy_norm - trust_radius * trust_radius;
  const double disc = std::max(0.0, b * b - 4.0 * a * c);
  const double tau =
      a > 0.0 ? std::clamp((-b + std::sqrt(disc)) / (2.0 * a), 0.0, 1.0) : 0.0;
  return cauchy + tau * leg;
}

double DoglegSolver::model_reduction(const VectorXd& gradient,
                                     const VectorXd& step) const {
  return -(gradient.dot(step) + 0.5 * step.dot(damped_ * step));
}

VectorXd dogleg_step(const VectorXd& gradient,
                     const Eigen::SparseMatrix<double>& curvature,
                     double trust_radius) {
  return DoglegSolver(curvature).step(gradient, trust_radius);
}

MinimizeResult minimize(const EnergyEvaluator& energy, VectorXd x0,
                        const SolverSettings& settings) {
  settings.validate();
  MinimizeResult result;
  result.x = std::move(x0);

  Evaluation eval = energy(result.x, true);
  if (!std::isfinite(eval.value) || !eval.gradient.allFinite())
    throw std::runtime_error(
        "minimize: non-finite objective or gradient at the initial state");

  double radius = settings.initial_radius;
  std::optional<DoglegSolver> solver;
  for (int iter = 1; iter <= settings.max_inner_iterations; ++iter) {
    if (eval.gradient.lpNorm<Eigen::Infinity>() < settings.gradient_tolerance)
      break;
    if (radius < settings.min_radius) break;
    if (!solver) solver.emplace(eval.curvature);

    const VectorXd step = solver->step(eval.gradient, radius);
    const double predicted = solver->model_reduction(eval.gradient, step);
    const double trial_value = energy(result.x + step, false).value;

    TraceRecord rec;
    rec.iteration = iter;
    rec.radius = radius;
    rec.step_norm = step.norm();
    rec.predicted = predicted;
    const bool trial_finite = std::isfinite(trial_value);
    rec.actual = trial_finite ? eval.value - trial_value
                              : -std::numeric_limits<double>::infinity();
    const double ratio =
        (trial_finite && predicted > 0.0) ? rec.actual / predicted : -1.0;

    if (ratio > 0.05) {
      result.x += step;
      eval = energy(result.x, true);
      if (!std::isfinite(eval.value) || !eval.gradient.allFinite())
        throw std::runtime_error(
            "minimize: non-finite evaluation at accepted state, iteration " +
            std::to_string(iter));
      rec.accepted = true;
      solver->refactorize(eval.curvature);
    }
    if (ratio > 0.75)
      radius *= 2.0;
    else if (ratio < 0.05)
      radius *= 0.25;

    rec.objective = eval.value;
    result.trace.push_back(rec);

    if (rec.accepted &&
        rec.actual < settings.relative_decrease *
                         std::max(1.0, std::abs(eval.value)))
      break;
  }
  result.value = eval.value;
  result.gradient = eval.gradient;
  return result;
}

void write_trace(std::ostream& out, const std::vector<TraceRecord>& trace) {
  for (const auto& rec : trace) {
    out << rec.iteration << ' ' << rec.objective << ' ' << rec.radius << ' '
        << rec.step_norm << ' ' << rec.predicted << ' ' << rec.actual << ' '
        << (rec.accepted ? "accepted" : "rejected") << '\n';
  }
}

VectorXd flatten(const FitState& state, const ActiveBlocks& active,
                 const BodyModel& model) {
  VectorXd x(active.total_dim(model));
  int c = 0;
  if (active.rest) {
    for (int i = 0; i < model.vertex_count(); ++i) {
      x.segment<3>(c) = state.rest[i];
      c += 3;
    }
  }
  if (active.beta) {
    x.segment(c, model.shape_dim()) =
        state.beta.size() ? state.beta : VectorXd::Zero(model.shape_dim());
    c += model.shape_dim();
  }
  if (active.theta) {
    x.segment(c, 3 * model.joint_count()) = state.pose.joint_rotations;
    c += 3 * model.joint_count();
  }
  if (active.translation) x.segment<3>(c) = state.pose.translation;
  return x;
}

FitState unflatten(const VectorXd& x, const FitState& base,
                   const ActiveBlocks& active, const BodyModel& model) {
  if (x.size() != active.total_dim(model))
    throw std::runtime_error("unflatten: dimension mismatch");
  FitState state = base;
  int c = 0;
  if (active.rest) {
    for (int i = 0; i < model.vertex_count(); ++i) {
      state.rest[i] = x.segment<3>(c);
      c += 3;
    }
  }
  if (active.beta) {
    state.beta = x.segment(c, model.shape_dim());
    c += model.shape_dim();
  }
  if (active.theta) {
    state.pose.joint_rotations = x.segment(c, 3 * model.joint_count());
    c += 3 * model.joint_count();
  }
  if (active.translation) state.pose.translation = x.segment<3>(c);
  return state;
}

VectorXd flatten_gradient(const EnergyReport& report,
                          const ActiveBlocks& active, const BodyModel& model) {
  VectorXd g(active.total_dim(model));
  int c = 0;
  if (active.rest) {
    for (int i = 0; i < model.vertex_count(); ++i) {
      g.segment<3>(c) = report.d_rest[i];
      c += 3;
    }
  }
  if (active.beta) {
    g.segment(c, model.shape_dim()) = report.d_beta;
    c += model.shape_dim();
  }
  if (active.theta) {
    g.segment(c, 3 * model.joint_count()) = report.d_theta;
    c += 3 * model.joint_count();
  }
  if (active.translation) g.segment<3>(c) = report.d_t;
  return g;
}

RefreshResult solve_with_refresh(const Scan& scan, const BodyModel& model,
                                 const ObjectiveConfig& cfg,
                                 CouplingAnchor anchor,
                                 const ParamBlockSet& init,
                                 const SolverSettings& settings,
                                 SkinWeightMode mode) {
  settings.validate();
  SingleFrameObjective objective(model, scan, cfg, anchor, mode);

  RefreshResult out;
  out.params = init;
  if (out.params.state.beta.size() == 0)
    out.params.state.beta = VectorXd::Zero(model.shape_dim());
  FitState& current = out.params.state;
  const ActiveBlocks& active = out.params.active;

  for (int outer = 0; outer < settings.outer_refreshes; ++outer) {
    objective.refresh(current);
    ++out.refreshes;

    const FitState base = current;
    const auto evaluator = [&](const VectorXd& x,
                               bool want_derivatives) -> Evaluation {
      const FitState s = unflatten(x, base, active, model);
      Evaluation ev;
      if (want_derivatives) {
        GnSystem gn;
        const EnergyReport report = objective.evaluate(s, &gn, &active);
        ev.value = report.total;
        ev.gradient = flatten_gradient(report, active, model);
        ev.curvature = gn.assemble();
      } else {
        ev.value = objective.evaluate(s).total;
      }
      return ev;
    };

    MinimizeResult inner =
        minimize(evaluator, flatten(current, active, model), settings);
    current = unflatten(inner.x, base, active, model);
    out.inner_traces.push_back(std::move(inner.trace));
  }
  out.final_report = objective.evaluate(current);
  return out;
}

}  // namespace mcs
