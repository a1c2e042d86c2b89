#pragma once

#include <functional>
#include <ostream>
#include <vector>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "mcs/objective.hpp"

namespace mcs {

struct SolverSettings {
  double initial_radius = 1.0;
  double min_radius = 1e-10;
  int max_inner_iterations = 100;
  int outer_refreshes = 5;
  double relative_decrease = 1e-6;   // stop when step gain falls below this
  double gradient_tolerance = 1e-8;  // infinity norm

  void validate() const;  // throws unless everything positive, iterations >= 1
};

/// One trust-region iteration. radius is the radius the step was computed
/// with; objective is the accepted value after the iteration (unchanged on
/// rejection).
struct TraceRecord {
  int iteration = 0;
  double objective = 0.0;
  double radius = 0.0;
  double step_norm = 0.0;
  double predicted = 0.0;
  double actual = 0.0;
  bool accepted = false;
};

/// Energy evaluation at a point. curvature (a symmetric Gauss-Newton model)
/// and gradient are only populated when the evaluator is asked for them.
struct Evaluation {
  double value = 0.0;
  VectorXd gradient;
  Eigen::SparseMatrix<double> curvature;
};

/// Callable (x, want_derivatives) -> Evaluation. With want_derivatives false
/// only value is read (trial-point probes).
using EnergyEvaluator = std::function<Evaluation(const VectorXd&, bool)>;

/// Dogleg step machinery around one factorized curvature model. The model
/// carries Levenberg damping on the diagonal; a factorization failure makes
/// step() fall back to scaled steepest descent.
class DoglegSolver {
 public:
  explicit DoglegSolver(const Eigen::SparseMatrix<double>& curvature,
                        double damping = 1e-6);

  /// Swap in a new curvature. Reuses the symbolic analysis when the sparsity
  /// pattern is unchanged (the common case across iterations of one solve).
  void refactorize(const Eigen::SparseMatrix<double>& curvature);

  VectorXd step(const VectorXd& gradient, double trust_radius) const;
  /// Reduction promised by the damped quadratic model for a step.
  double model_reduction(const VectorXd& gradient, const VectorXd& step) const;
  bool gauss_newton_available() const { return gn_ok_; }

 private:
  double damping_ = 1e-6;
  Eigen::SparseMatrix<double> damped_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
  bool gn_ok_ = false;
};

/// Single dogleg step against a one-off curvature model.
VectorXd dogleg_step(const VectorXd& gradient,
                     const Eigen::SparseMatrix<double>& curvature,
                     double trust_radius);

struct MinimizeResult {
  VectorXd x;
  double value = 0.0;
  VectorXd gradient;
  std::vector<TraceRecord> trace;
};

/// Trust-region minimization with the standard ratio test: accept when
/// actual/predicted > 0.05, radius x2 above 0.75, x0.25 below 0.05.
/// Non-finite trial values are rejected (radius shrinks); a non-finite
/// value at the current state aborts with a diagnostic.
MinimizeResult minimize(const EnergyEvaluator& energy, VectorXd x0,
                        const SolverSettings& settings);

/// Line-delimited trace export for debugging.
void write_trace(std::ostream& out, const std::vector<TraceRecord>& trace);

/// Named parameter blocks with active flags; frozen blocks pass through a
/// solve bit-identical.
struct ParamBlockSet {
  FitState state;
  ActiveBlocks active;
};

/// Pack the active blocks into a flat vector ordered [T | beta | theta | t].
VectorXd flatten(const FitState& state, const ActiveBlocks& active,
                 const BodyModel& model);
/// Inverse of flatten; frozen blocks are copied from base.
FitState unflatten(const VectorXd& x, const FitState& base,
                   const ActiveBlocks& active, const BodyModel& model);
/// The gradient blocks of a report, packed in the same order.
VectorXd flatten_gradient(const EnergyReport& report, const ActiveBlocks& active,
                          const BodyModel& model);

struct RefreshResult {
  ParamBlockSet params;
  int refreshes = 0;  // always equals settings.outer_refreshes
  std::vector<std::vector<TraceRecord>> inner_traces;
  EnergyReport final_report;  // at the solution, final correspondences
};

/// ICP-style outer loop: refresh correspondences / inside flags / skin
/// weights at the current state, then run an inner trust-region solve, for
/// exactly settings.outer_refreshes rounds.
RefreshResult solve_with_refresh(const Scan& scan, const BodyModel& model,
                                 const ObjectiveConfig& cfg,
                                 CouplingAnchor anchor,
                                 const ParamBlockSet& init,
                                 const SolverSettings& settings,
                                 SkinWeightMode mode);

}  // namespace mcs
