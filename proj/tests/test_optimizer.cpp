#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <vector>

#include "mcs/body_model.hpp"
#include "mcs/optimizer.hpp"
#include "mcs/rng.hpp"
#include "mcs/synthetic.hpp"

using namespace mcs;

namespace {

Eigen::SparseMatrix<double> to_sparse(const MatrixXd& dense) {
  Eigen::SparseMatrix<double> s(dense.rows(), dense.cols());
  for (int r = 0; r < dense.rows(); ++r)
    for (int c = 0; c < dense.cols(); ++c)
      if (dense(r, c) != 0.0) s.insert(r, c) = dense(r, c);
  s.makeCompressed();
  return s;
}

Evaluation rosenbrock(const VectorXd& x, bool want_derivatives) {
  Evaluation ev;
  const double r1 = 10.0 * (x[1] - x[0] * x[0]);
  const double r2 = 1.0 - x[0];
  ev.value = r1 * r1 + r2 * r2;
  if (want_derivatives) {
    Eigen::Matrix2d j;
    j << -20.0 * x[0], 10.0, -1.0, 0.0;
    const Eigen::Vector2d r(r1, r2);
    ev.gradient = 2.0 * j.transpose() * r;
    ev.curvature = to_sparse(2.0 * j.transpose() * j);
  }
  return ev;
}

void check_accepted_monotone(const std::vector<TraceRecord>& trace) {
  double last = std::numeric_limits<double>::infinity();
  for (const auto& rec : trace) {
    if (!rec.accepted) continue;
    CHECK(rec.objective <= last + 1e-12);
    last = rec.objective;
  }
}

void check_steps_within_radius(const std::vector<TraceRecord>& trace) {
  for (const auto& rec : trace) CHECK(rec.step_norm <= rec.radius + 1e-9);
}

bool bits_equal(const Vec3& a, const Vec3& b) {
  return std::memcmp(a.data(), b.data(), 3 * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("dogleg step on a quadratic bowl") {
  // f = ||x||^2: gradient 2x, curvature 2I. Newton step is exactly -x.
  const Eigen::Vector3d x(0.6, -0.8, 0.4);
  const Eigen::SparseMatrix<double> h =
      to_sparse(2.0 * Eigen::Matrix3d::Identity());

  const VectorXd inside = dogleg_step(2.0 * x, h, 10.0);
  CHECK((inside + x).norm() < 1e-6);

  // Small radius: step of exactly that length along the negative gradient.
  const double radius = 0.3;
  const VectorXd clipped = dogleg_step(2.0 * x, h, radius);
  CHECK(clipped.norm() == doctest::Approx(radius).epsilon(1e-12));
  CHECK((clipped.normalized() + x.normalized()).norm() < 1e-9);

  // Zero gradient: no step.
  CHECK(dogleg_step(VectorXd::Zero(3), h, 1.0).norm() == 0.0);

  // Indefinite (negative) curvature still yields a boundary descent step.
  const VectorXd fallback =
      dogleg_step(2.0 * x, to_sparse(-Eigen::Matrix3d::Identity()), radius);
  CHECK(fallback.norm() <= radius + 1e-9);
  CHECK(fallback.dot(x) < 0.0);
}

TEST_CASE("dogleg blends between cauchy and newton points") {
  // Anisotropic bowl: f = x^T diag(1, 50) x. At radii between the Cauchy
  // and Newton lengths the step must sit exactly on the boundary.
  Eigen::Matrix2d a = Eigen::Vector2d(2.0, 100.0).asDiagonal();
  const Eigen::Vector2d x(1.0, 1.0);
  const VectorXd g = a * x;
  const Eigen::SparseMatrix<double> h = to_sparse(a);

  const double newton_len = x.norm();
  const double cauchy_len =
      (g.squaredNorm() / g.dot(a * g)) * g.norm();
  REQUIRE(cauchy_len < newton_len);

  const double radius = 0.5 * (cauchy_len + newton_len);
  const VectorXd step = dogleg_step(g, h, radius);
  CHECK(step.norm() == doctest::Approx(radius).epsilon(1e-9));
  // And it descends.
  CHECK(g.dot(step) < 0.0);
}

TEST_CASE("rosenbrock reaches the optimum inside 200 iterations") {
  SolverSettings settings;
  settings.max_inner_iterations = 200;
  settings.gradient_tolerance = 1e-12;
  settings.relative_decrease = 1e-15;
  settings.min_radius = 1e-14;

  VectorXd x0(2);
  x0 << -1.2, 1.0;
  const MinimizeResult res = minimize(rosenbrock, x0, settings);

  CHECK((res.x - Eigen::Vector2d(1.0, 1.0)).norm() < 1e-8);
  CHECK(static_cast<int>(res.trace.size()) <= 200);
  check_accepted_monotone(res.trace);
  check_steps_within_radius(res.trace);
}

TEST_CASE("minimize leaves a stationary point untouched") {
  const auto bowl = [](const VectorXd& x, bool want) {
    Evaluation ev;
    ev.value = x.squaredNorm();
    if (want) {
      ev.gradient = 2.0 * x;
      ev.curvature = to_sparse(2.0 * MatrixXd::Identity(x.size(), x.size()));
    }
    return ev;
  };
  SolverSettings settings;
  const MinimizeResult res = minimize(bowl, VectorXd::Zero(4), settings);
  CHECK(res.x.cwiseAbs().maxCoeff() == 0.0);
  CHECK(res.trace.empty());
  CHECK(res.value == 0.0);
}

TEST_CASE("linear least squares lands on the normal-equations solution") {
  Rng rng(17);
  MatrixXd a(20, 7);
  VectorXd b(20);
  for (int r = 0; r < 20; ++r) {
    for (int c = 0; c < 7; ++c) a(r, c) = rng.normal();
    b[r] = rng.normal();
  }
  const VectorXd reference =
      (a.transpose() * a).ldlt().solve(a.transpose() * b);

  const auto lsq = [&](const VectorXd& x, bool want) {
    Evaluation ev;
    const VectorXd r = a * x - b;
    ev.value = r.squaredNorm();
    if (want) {
      ev.gradient = 2.0 * a.transpose() * r;
      ev.curvature = to_sparse(2.0 * a.transpose() * a);
    }
    return ev;
  };

  SolverSettings settings;
  settings.gradient_tolerance = 1e-12;
  settings.relative_decrease = 1e-14;
  const MinimizeResult res = minimize(lsq, VectorXd::Zero(7), settings);
  CHECK((res.x - reference).lpNorm<Eigen::Infinity>() < 1e-8);
  check_accepted_monotone(res.trace);
  check_steps_within_radius(res.trace);
}

TEST_CASE("non-finite trials are rejected, non-finite states abort") {
  // Objective undefined past |x| = 1.5; the minimizer must shrink instead
  // of stepping into the hole.
  const auto guarded = [](const VectorXd& x, bool want) {
    Evaluation ev;
    if (std::abs(x[0]) > 1.5) {
      ev.value = std::numeric_limits<double>::quiet_NaN();
      if (want) {
        ev.gradient = VectorXd::Constant(1, ev.value);
        ev.curvature = to_sparse(MatrixXd::Identity(1, 1));
      }
      return ev;
    }
    ev.value = (x[0] - 3.0) * (x[0] - 3.0);
    if (want) {
      ev.gradient = VectorXd::Constant(1, 2.0 * (x[0] - 3.0));
      ev.curvature = to_sparse(2.0 * MatrixXd::Identity(1, 1));
    }
    return ev;
  };

  SolverSettings settings;
  settings.initial_radius = 4.0;
  const MinimizeResult res = minimize(guarded, VectorXd::Zero(1), settings);
  CHECK(std::abs(res.x[0]) <= 1.5);
  CHECK(res.value <= 9.0);  // initial value, monotone descent
  bool saw_rejection = false;
  for (const auto& rec : res.trace) saw_rejection |= !rec.accepted;
  CHECK(saw_rejection);
  check_accepted_monotone(res.trace);

  CHECK_THROWS_AS(minimize(guarded, VectorXd::Constant(1, 2.0), settings),
                  std::runtime_error);
}

TEST_CASE("solver settings are validated") {
  SolverSettings bad;
  bad.initial_radius = 0.0;
  CHECK_THROWS(bad.validate());
  bad = SolverSettings{};
  bad.max_inner_iterations = 0;
  CHECK_THROWS(bad.validate());
  bad = SolverSettings{};
  bad.outer_refreshes = 0;
  CHECK_THROWS(bad.validate());
  SolverSettings good;
  CHECK_NOTHROW(good.validate());
}

TEST_CASE("trace export writes one line per record") {
  std::vector<TraceRecord> trace(3);
  trace[0] = {1, 10.0, 1.0, 0.5, 0.6, 0.55, true};
  trace[1] = {2, 10.0, 0.25, 0.25, 0.1, -0.05, false};
  trace[2] = {3, 9.0, 0.5, 0.2, 0.9, 1.0, true};
  std::ostringstream out;
  write_trace(out, trace);
  int lines = 0;
  std::string line;
  std::istringstream in(out.str());
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 3);
  CHECK(out.str().find("rejected") != std::string::npos);
}

TEST_CASE("refresh loop: exact scan at init converges immediately") {
  const BodyModel m = make_humanoid_model();
  Scan scan;
  for (int i = 0; i < m.vertex_count(); i += 3)
    scan.points.push_back(m.rest_template[i]);
  scan.skin_weights = VectorXd::Zero(scan.size());

  ParamBlockSet init;
  init.state.rest = m.rest_template;
  init.state.beta = VectorXd::Zero(m.shape_dim());
  init.state.pose = Pose::zero(m.joint_count());

  SolverSettings settings;
  const RefreshResult res =
      solve_with_refresh(scan, m, ObjectiveConfig{}, CouplingAnchor::model_space(),
                         init, settings, SkinWeightMode::all_skin);

  CHECK(res.refreshes == settings.outer_refreshes);
  CHECK(static_cast<int>(res.inner_traces.size()) == settings.outer_refreshes);
  CHECK(res.final_report.total < 1e-15);
  CHECK(res.final_report.e_skin < 1e-20);
  size_t attempts = 0;
  for (const auto& t : res.inner_traces) attempts += t.size();
  CHECK(attempts == 0);  // gradient already below tolerance everywhere
}

TEST_CASE("refresh loop recovers a pose and keeps frozen blocks bit-identical") {
  const BodyModel m = make_humanoid_model();

  Pose truth = Pose::zero(m.joint_count());
  truth.joint_rotations.segment<3>(12) = Vec3(0.12, -0.06, 0.10);  // arm
  truth.joint_rotations.segment<3>(18) = Vec3(-0.08, 0.11, 0.05);  // leg
  truth.joint_rotations.segment<3>(9) = Vec3(0.05, 0.04, -0.07);   // head
  truth.translation = Vec3(0.02, -0.01, 0.03);

  const PosedBody posed(m, m.rest_template, nullptr, truth);
  Scan scan;
  for (int i = 0; i < m.vertex_count(); i += 3)
    scan.points.push_back(posed.vertices()[i]);
  scan.skin_weights = VectorXd::Zero(scan.size());

  ParamBlockSet init;
  init.state.rest = m.rest_template;
  init.state.beta = VectorXd::Zero(m.shape_dim());
  init.state.pose = Pose::zero(m.joint_count());
  init.active.rest = false;
  init.active.beta = false;

  // Annealed schedule: a strong pose prior first to keep the provisional
  // correspondences from contorting weakly constrained joints, then a long
  // cheap polish once the assignments are trustworthy.
  struct Phase {
    double lambda_prior;
    int inner, outers;
  };
  const Phase phases[] = {{1.0, 3, 15}, {0.1, 3, 15}, {0.01, 3, 15}, {1e-8, 10, 300}};

  ParamBlockSet current = init;
  RefreshResult res;
  for (const Phase& ph : phases) {
    ObjectiveConfig cfg;
    cfg.lambda_prior = ph.lambda_prior;
    SolverSettings settings;
    settings.max_inner_iterations = ph.inner;
    settings.outer_refreshes = ph.outers;
    res = solve_with_refresh(scan, m, cfg, CouplingAnchor::model_space(), current,
                             settings, SkinWeightMode::all_skin);
    current = res.params;

    // Frozen blocks byte-for-byte after every phase.
    for (int i = 0; i < m.vertex_count(); ++i)
      REQUIRE(bits_equal(current.state.rest[i], init.state.rest[i]));
    REQUIRE(std::memcmp(current.state.beta.data(), init.state.beta.data(),
                        sizeof(double) * m.shape_dim()) == 0);
  }

  CHECK((current.state.pose.joint_rotations - truth.joint_rotations)
            .lpNorm<Eigen::Infinity>() < 1e-3);
  CHECK((current.state.pose.translation - truth.translation)
            .lpNorm<Eigen::Infinity>() < 1e-4);

  for (const auto& t : res.inner_traces) {
    check_accepted_monotone(t);
    check_steps_within_radius(t);
  }
}

TEST_CASE("refresh loop is self-consistent against many more refreshes") {
  const BodyModel m = make_humanoid_model();
  Rng rng(29);

  Pose truth = Pose::zero(m.joint_count());
  truth.joint_rotations.segment<3>(12) = Vec3(0.09, -0.04, 0.08);
  const PosedBody posed(m, m.rest_template, nullptr, truth);
  Scan scan;
  for (int i = 0; i < m.vertex_count(); i += 4) {
    scan.points.push_back(posed.vertices()[i] +
                          Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.002);
  }
  scan.skin_weights = VectorXd::Zero(scan.size());

  ParamBlockSet init;
  init.state.rest = m.rest_template;
  init.state.beta = VectorXd::Zero(m.shape_dim());
  init.state.pose = Pose::zero(m.joint_count());

  SolverSettings settings;
  settings.max_inner_iterations = 30;
  SolverSettings more = settings;
  more.outer_refreshes = settings.outer_refreshes * 4;

  const ObjectiveConfig cfg;
  const RefreshResult base =
      solve_with_refresh(scan, m, cfg, CouplingAnchor::model_space(), init,
                         settings, SkinWeightMode::all_skin);
  const RefreshResult extended =
      solve_with_refresh(scan, m, cfg, CouplingAnchor::model_space(), init,
                         more, SkinWeightMode::all_skin);

  CHECK(base.refreshes == 5);
  CHECK(extended.refreshes == 20);
  CHECK(base.final_report.total ==
        doctest::Approx(extended.final_report.total).epsilon(0.01));

  // Determinism: the identical call reproduces the trace bit-for-bit.
  const RefreshResult again =
      solve_with_refresh(scan, m, cfg, CouplingAnchor::model_space(), init,
                         settings, SkinWeightMode::all_skin);
  REQUIRE(again.inner_traces.size() == base.inner_traces.size());
  for (size_t o = 0; o < base.inner_traces.size(); ++o) {
    REQUIRE(again.inner_traces[o].size() == base.inner_traces[o].size());
    for (size_t i = 0; i < base.inner_traces[o].size(); ++i) {
      CHECK(again.inner_traces[o][i].objective ==
            base.inner_traces[o][i].objective);
      CHECK(again.inner_traces[o][i].step_norm ==
            base.inner_traces[o][i].step_norm);
    }
  }
  CHECK(again.final_report.total == base.final_report.total);

  // Final objective no worse than the init evaluated with the final
  // correspondences.
  SingleFrameObjective objective(m, scan, cfg, CouplingAnchor::model_space(),
                                 SkinWeightMode::all_skin);
  objective.refresh(base.params.state);
  CHECK(base.final_report.total <=
        objective.evaluate(init.state).total + 1e-12);
}

TEST_CASE("a frozen theta block never moves") {
  const BodyModel m = make_humanoid_model();
  Rng rng(31);
  Scan scan;
  for (int i = 0; i < m.vertex_count(); i += 5)
    scan.points.push_back(m.rest_template[i] +
                          Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.004);
  scan.skin_weights = VectorXd::Zero(scan.size());

  ParamBlockSet init;
  init.state.rest = m.rest_template;
  init.state.beta = VectorXd::Zero(m.shape_dim());
  init.state.pose = Pose::zero(m.joint_count());
  init.state.pose.joint_rotations[5] = 0.031;  // arbitrary frozen content
  init.active.theta = false;
  init.active.translation = false;

  SolverSettings settings;
  settings.outer_refreshes = 2;
  settings.max_inner_iterations = 15;
  const RefreshResult res =
      solve_with_refresh(scan, m, ObjectiveConfig{}, CouplingAnchor::model_space(),
                         init, settings, SkinWeightMode::all_skin);

  CHECK(std::memcmp(res.params.state.pose.joint_rotations.data(),
                    init.state.pose.joint_rotations.data(),
                    sizeof(double) * 3 * m.joint_count()) == 0);
  CHECK(bits_equal(res.params.state.pose.translation,
                   init.state.pose.translation));
  // And the active template did move.
  bool moved = false;
  for (int i = 0; i < m.vertex_count() && !moved; ++i)
    moved = !bits_equal(res.params.state.rest[i], init.state.rest[i]);
  CHECK(moved);
}
