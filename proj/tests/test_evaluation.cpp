#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "mcs/evaluation.hpp"
#include "mcs/synthetic.hpp"

using namespace mcs;

namespace {

RestShape shaped_rest(const BodyModel& m, const VectorXd& beta) {
  const auto offsets = shape_blendshape(m, beta);
  RestShape rest = m.rest_template;
  for (int i = 0; i < m.vertex_count(); ++i) rest[i] += offsets[i];
  return rest;
}

/// Stopping tolerances tight enough to expose the metric's own accuracy.
SolverSettings tight_solver() {
  SolverSettings s;
  s.relative_decrease = 1e-12;
  s.gradient_tolerance = 1e-10;
  return s;
}

Pose mild_pose(const BodyModel& m) {
  Pose pose = Pose::zero(m.joint_count());
  pose.joint_rotations.segment<3>(12) = Vec3(0.10, -0.05, 0.08);
  pose.joint_rotations.segment<3>(21) = Vec3(-0.06, 0.09, 0.04);
  pose.translation = Vec3(0.01, -0.02, 0.015);
  return pose;
}

/// Vertex ids whose part label lies in `parts`.
std::vector<int> vertices_of_parts(const BodyModel& m,
                                   const std::vector<int>& parts) {
  std::vector<int> out;
  for (int i = 0; i < m.vertex_count(); ++i)
    if (std::find(parts.begin(), parts.end(), m.part_labels[i]) != parts.end())
      out.push_back(i);
  return out;
}

}  // namespace

TEST_CASE("distance summary statistics match hand-computed values") {
  VectorXd d(4);
  d << 0.001, 0.004, 0.002, 0.003;
  const ErrorSummary s = summarize_distances(d);
  CHECK(s.rmse == doctest::Approx(std::sqrt(7.5e-6)).epsilon(1e-12));
  CHECK(s.mean == doctest::Approx(2.5e-3).epsilon(1e-12));
  CHECK(s.median == doctest::Approx(2.5e-3).epsilon(1e-12));
  CHECK(s.rmse >= 0.0);

  REQUIRE(s.curve.size() == 4);
  for (size_t i = 0; i + 1 < s.curve.size(); ++i) {
    CHECK(s.curve[i].threshold < s.curve[i + 1].threshold);
    CHECK(s.curve[i].fraction <= s.curve[i + 1].fraction);
  }
  CHECK(s.curve.front().fraction == doctest::Approx(0.25));
  CHECK(s.curve.back().threshold == 0.004);
  CHECK(s.curve.back().fraction == 1.0);

  // Odd count: median is the central value; ties collapse curve samples.
  VectorXd odd(3);
  odd << 0.002, 0.002, 0.005;
  const ErrorSummary so = summarize_distances(odd);
  CHECK(so.median == 0.002);
  REQUIRE(so.curve.size() == 2);
  CHECK(so.curve[0].fraction == doctest::Approx(2.0 / 3.0));

  CHECK_THROWS(summarize_distances(VectorXd()));
  VectorXd bad(1);
  bad << -0.001;
  CHECK_THROWS(summarize_distances(bad));
}

TEST_CASE("registration error vanishes when the result is the posed reference") {
  const BodyModel m = make_humanoid_model();
  VectorXd beta = VectorXd::Zero(m.shape_dim());
  beta[0] = 0.4;
  const RestShape reference = shaped_rest(m, beta);
  const TriMesh result = pose_model(m, reference, nullptr, mild_pose(m));

  const ErrorSummary s =
      registration_error(result, reference, m, tight_solver());
  CHECK(s.rmse < 1e-6);
}

TEST_CASE("registration error reads a constructed 5mm inflation") {
  const BodyModel m = make_humanoid_model();
  const RestShape reference = m.rest_template;
  TriMesh result = pose_model(m, reference, nullptr, mild_pose(m));
  const auto normals = vertex_normals(result);
  for (int i = 0; i < result.vertex_count(); ++i)
    result.vertices[i] += 0.005 * normals[i];

  const ErrorSummary s =
      registration_error(result, reference, m, tight_solver());
  CHECK(s.rmse == doctest::Approx(0.005).epsilon(0.10));
}

TEST_CASE("registration error is invariant to rigid motion of the result") {
  const BodyModel m = make_humanoid_model();
  const RestShape reference = m.rest_template;
  const Matrix3d rot = rodrigues(Vec3(0.0, 0.0, 0.1));
  const Vec3 shift(0.05, -0.02, 0.03);

  // Exact surface: one sharp basin, the fit absorbs the motion completely.
  const TriMesh exact = pose_model(m, reference, nullptr, mild_pose(m));
  TriMesh exact_moved = exact;
  for (Vec3& v : exact_moved.vertices) v = rot * v + shift;
  const double base =
      registration_error(exact, reference, m, tight_solver()).rmse;
  const double rigid =
      registration_error(exact_moved, reference, m, tight_solver()).rmse;
  CHECK(std::abs(rigid - base) < 1e-6);

  // A 3mm-inflated surface has a shallow kernel basin; congruent fits agree
  // only to a fraction of the (3mm) error level.
  TriMesh inflated = exact;
  const auto normals = vertex_normals(inflated);
  for (int i = 0; i < inflated.vertex_count(); ++i)
    inflated.vertices[i] += 0.003 * normals[i];
  TriMesh inflated_moved = inflated;
  for (Vec3& v : inflated_moved.vertices) v = rot * v + shift;
  const double inflated_base =
      registration_error(inflated, reference, m, tight_solver()).rmse;
  const double inflated_rigid =
      registration_error(inflated_moved, reference, m, tight_solver()).rmse;
  CHECK(std::abs(inflated_rigid - inflated_base) < 0.02 * inflated_base);
}

TEST_CASE("registration error validates inputs") {
  const BodyModel m = make_humanoid_model();
  CHECK_THROWS(registration_error(TriMesh{}, m.rest_template, m,
                                  SolverSettings{}));
  RestShape short_rest = m.rest_template;
  short_rest.pop_back();
  const TriMesh result =
      pose_model(m, m.rest_template, nullptr, Pose::zero(m.joint_count()));
  CHECK_THROWS(registration_error(result, short_rest, m, SolverSettings{}));
}

TEST_CASE("landmarks at posed vertices give zero error everywhere") {
  const BodyModel m = make_humanoid_model();
  SequenceResult result;
  result.fusion_shape = m.rest_template;
  result.beta = VectorXd::Zero(m.shape_dim());
  for (int k = 0; k < 2; ++k) {
    FrameTrack frame;
    frame.pose = Pose::zero(m.joint_count());
    frame.pose.joint_rotations.segment<3>(12) = Vec3(0.05 * (k + 1), 0.0, 0.02);
    frame.detailed = m.rest_template;
    result.frames.push_back(frame);
  }

  LandmarkSet landmarks;
  landmarks.correspondence_sets = {{10, 200, 700}};
  for (const FrameTrack& frame : result.frames) {
    const TriMesh posed = pose_model(m, frame.detailed, nullptr, frame.pose);
    landmarks.positions.push_back(
        {posed.vertices[10], posed.vertices[200], posed.vertices[700]});
  }

  const LandmarkError err = landmark_error(result, landmarks, m);
  REQUIRE(err.per_frame_mean.size() == 2);
  CHECK(err.per_frame_mean[0] == 0.0);
  CHECK(err.per_frame_mean[1] == 0.0);
  REQUIRE(err.pooled.curve.size() == 1);
  CHECK(err.pooled.curve[0].threshold == 0.0);
  CHECK(err.pooled.curve[0].fraction == 1.0);
}

TEST_CASE("a single marker offset 1cm reads back as a 1cm mean") {
  const BodyModel m = make_humanoid_model();
  SequenceResult result;
  result.fusion_shape = m.rest_template;
  result.beta = VectorXd::Zero(m.shape_dim());
  FrameTrack frame;
  frame.pose = Pose::zero(m.joint_count());
  frame.detailed = m.rest_template;
  result.frames.push_back(frame);

  const TriMesh posed = pose_model(m, frame.detailed, nullptr, frame.pose);
  LandmarkSet landmarks;
  landmarks.correspondence_sets = {{42}};
  landmarks.positions = {{posed.vertices[42] + Vec3(0.01, 0.0, 0.0)}};

  const LandmarkError err = landmark_error(result, landmarks, m);
  CHECK(err.per_frame_mean[0] == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("multi-set landmark error equals the mean of per-set errors") {
  const BodyModel m = make_humanoid_model();
  SequenceResult result;
  result.fusion_shape = m.rest_template;
  result.beta = VectorXd::Zero(m.shape_dim());
  FrameTrack frame;
  frame.pose = Pose::zero(m.joint_count());
  frame.detailed = m.rest_template;
  result.frames.push_back(frame);
  const TriMesh posed = pose_model(m, frame.detailed, nullptr, frame.pose);

  // Markers sit at set A's vertices, so set B contributes its own error.
  const std::vector<int> set_a = {5, 100}, set_b = {6, 101};
  LandmarkSet both;
  both.correspondence_sets = {set_a, set_b};
  both.positions = {{posed.vertices[5], posed.vertices[100]}};

  LandmarkSet only_a = both, only_b = both;
  only_a.correspondence_sets = {set_a};
  only_b.correspondence_sets = {set_b};

  const double combined = landmark_error(result, both, m).per_frame_mean[0];
  const double mean_a = landmark_error(result, only_a, m).per_frame_mean[0];
  const double mean_b = landmark_error(result, only_b, m).per_frame_mean[0];
  CHECK(combined == doctest::Approx(0.5 * (mean_a + mean_b)).epsilon(1e-12));
}

TEST_CASE("missing markers are excluded and bad ids are rejected") {
  const BodyModel m = make_humanoid_model();
  SequenceResult result;
  result.fusion_shape = m.rest_template;
  result.beta = VectorXd::Zero(m.shape_dim());
  FrameTrack frame;
  frame.pose = Pose::zero(m.joint_count());
  frame.detailed = m.rest_template;
  result.frames.push_back(frame);
  const TriMesh posed = pose_model(m, frame.detailed, nullptr, frame.pose);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  LandmarkSet landmarks;
  landmarks.correspondence_sets = {{3, 4}};
  landmarks.positions = {
      {posed.vertices[3] + Vec3(0.02, 0.0, 0.0), Vec3(nan, nan, nan)}};
  const LandmarkError err = landmark_error(result, landmarks, m);
  CHECK(err.per_frame_mean[0] == doctest::Approx(0.02).epsilon(1e-12));

  LandmarkSet bad = landmarks;
  bad.correspondence_sets = {{3, m.vertex_count()}};
  CHECK_THROWS(landmark_error(result, bad, m));

  LandmarkSet wrong_frames = landmarks;
  wrong_frames.positions.push_back(wrong_frames.positions[0]);
  CHECK_THROWS(landmark_error(result, wrong_frames, m));
}

TEST_CASE("noiseless synthesis samples the true posed surface") {
  const BodyModel m = make_humanoid_model();
  SynthSpec spec;
  spec.poses = {mild_pose(m)};
  spec.samples_per_frame = 1500;
  const SynthResult synth = synthesize_sequence(m, spec, 7);

  REQUIRE(synth.scans.size() == 1);
  REQUIRE(synth.scans[0].size() == 1500);
  const TriMesh posed = pose_model(m, synth.true_rest, nullptr, synth.poses[0]);
  const SpatialIndex index(posed);
  double worst = 0.0;
  for (const Vec3& p : synth.scans[0].points)
    worst = std::max(worst, index.closest(p).distance);
  CHECK(worst < 1e-9);

  // No cloth regions: every sample is labeled skin with weight 1.
  CHECK(synth.scans[0].skin_weights.minCoeff() == 1.0);
}

TEST_CASE("cloth samples stay outside the true body") {
  const BodyModel m = make_humanoid_model();
  SynthSpec spec;
  spec.beta = VectorXd::Zero(m.shape_dim());
  spec.beta[0] = 0.3;
  spec.poses = {Pose::zero(m.joint_count()), mild_pose(m)};
  spec.cloth = {{vertices_of_parts(m, torso_parts()), 0.005, 0.015}};
  spec.samples_per_frame = 2000;
  const SynthResult synth = synthesize_sequence(m, spec, 11);

  CHECK(synth.true_rest != m.rest_template);
  int cloth_points = 0;
  for (size_t k = 0; k < synth.scans.size(); ++k) {
    const TriMesh posed =
        pose_model(m, synth.true_rest, nullptr, synth.poses[k]);
    const SpatialIndex index(posed);
    const PseudoNormals pn(posed);
    const Scan& scan = synth.scans[k];
    REQUIRE(scan.labels.has_value());
    for (int i = 0; i < scan.size(); ++i) {
      if ((*scan.labels)[i] != PointLabel::cloth) continue;
      ++cloth_points;
      CHECK_FALSE(is_inside(scan.points[i], index.closest(scan.points[i]), pn));
    }
  }
  CHECK(cloth_points > 200);
}

TEST_CASE("synthesis is bit-identical for equal seeds") {
  const BodyModel m = make_humanoid_model();
  SynthSpec spec;
  spec.poses = {mild_pose(m)};
  spec.cloth = {{vertices_of_parts(m, torso_parts()), 0.002, 0.012}};
  spec.noise_sigma = 0.001;
  spec.samples_per_frame = 800;

  const SynthResult a = synthesize_sequence(m, spec, 123);
  const SynthResult b = synthesize_sequence(m, spec, 123);
  REQUIRE(a.scans[0].size() == b.scans[0].size());
  for (int i = 0; i < a.scans[0].size(); ++i)
    CHECK(std::memcmp(a.scans[0].points[i].data(), b.scans[0].points[i].data(),
                      sizeof(double) * 3) == 0);
  CHECK(*a.scans[0].labels == *b.scans[0].labels);

  const SynthResult c = synthesize_sequence(m, spec, 124);
  bool differs = false;
  for (int i = 0; i < a.scans[0].size() && !differs; ++i)
    differs = a.scans[0].points[i] != c.scans[0].points[i];
  CHECK(differs);
}

TEST_CASE("synthesis spec validation rejects bad recipes") {
  const BodyModel m = make_humanoid_model();
  SynthSpec spec;
  spec.poses = {Pose::zero(m.joint_count())};

  SynthSpec no_poses = spec;
  no_poses.poses.clear();
  CHECK_THROWS(synthesize_sequence(m, no_poses, 1));

  SynthSpec bad_noise = spec;
  bad_noise.noise_sigma = -0.001;
  CHECK_THROWS(synthesize_sequence(m, bad_noise, 1));

  SynthSpec bad_offsets = spec;
  bad_offsets.cloth = {{{0, 1}, 0.01, 0.005}};
  CHECK_THROWS(synthesize_sequence(m, bad_offsets, 1));

  SynthSpec bad_vertex = spec;
  bad_vertex.cloth = {{{m.vertex_count()}, 0.0, 0.01}};
  CHECK_THROWS(synthesize_sequence(m, bad_vertex, 1));

  SynthSpec bad_samples = spec;
  bad_samples.samples_per_frame = 0;
  CHECK_THROWS(synthesize_sequence(m, bad_samples, 1));
}

TEST_CASE("report formatting emits one record per frame and a table") {
  VectorXd per_frame(2);
  per_frame << 0.0125, 0.0075;
  const std::string records = frame_records(per_frame, "landmark_mean_m");
  CHECK(records.find("frame 0 landmark_mean_m 0.0125") != std::string::npos);
  CHECK(records.find("frame 1 landmark_mean_m 0.0075") != std::string::npos);

  const std::string table = summary_table(
      {{"subject01", "walk", 2.41}, {"subject02", "hips", 2.55}});
  CHECK(table.find("subject") != std::string::npos);
  CHECK(table.find("rmse(mm)") != std::string::npos);
  CHECK(table.find("2.410") != std::string::npos);
  CHECK(table.find("subject02") != std::string::npos);
}
