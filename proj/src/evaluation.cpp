#include "mcs/evaluation.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "mcs/rng.hpp"

namespace mcs {

ErrorSummary summarize_distances(VectorXd distances) {
  const int n = static_cast<int>(distances.size());
  if (n == 0) throw std::runtime_error("summarize: no distances");
  for (int i = 0; i < n; ++i)
    if (!std::isfinite(distances[i]) || distances[i] < 0.0)
      throw std::runtime_error("summarize: distance " + std::to_string(i) +
                               " is not a finite nonnegative value");

  ErrorSummary out;
  out.rmse = std::sqrt(distances.squaredNorm() / n);
  out.mean = distances.sum() / n;

  std::vector<double> sorted(distances.data(), distances.data() + n);
  std::sort(sorted.begin(), sorted.end());
  out.median = (n % 2 == 1) ? sorted[n / 2]
                            : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

  // One sample per distinct value: fraction of distances <= that value.
  for (int i = 0; i < n; ++i) {
    if (i + 1 < n && sorted[i + 1] == sorted[i]) continue;
    out.curve.push_back({sorted[i], static_cast<double>(i + 1) / n});
  }
  out.distances = std::move(distances);
  return out;
}

void LandmarkSet::validate(int vertex_count) const {
  const int markers = marker_count();
  for (const auto& frame : positions)
    if (static_cast<int>(frame.size()) != markers)
      throw std::runtime_error("landmarks: frames disagree on marker count");
  if (correspondence_sets.empty())
    throw std::runtime_error("landmarks: no correspondence set");
  for (const auto& set : correspondence_sets) {
    if (static_cast<int>(set.size()) != markers)
      throw std::runtime_error(
          "landmarks: correspondence set size != marker count");
    for (int v : set)
      if (v < 0 || v >= vertex_count)
        throw std::runtime_error("landmarks: vertex id " + std::to_string(v) +
                                 " out of range");
  }
}

void SynthSpec::validate(const BodyModel& model) const {
  if (poses.empty()) throw std::runtime_error("synth: no poses");
  for (const Pose& pose : poses)
    if (pose.joint_count() != model.joint_count())
      throw std::runtime_error("synth: pose joint count mismatch");
  if (!rest.empty() && static_cast<int>(rest.size()) != model.vertex_count())
    throw std::runtime_error("synth: rest shape vertex count mismatch");
  if (rest.empty() && beta.size() != 0 && beta.size() != model.shape_dim())
    throw std::runtime_error("synth: beta dimension mismatch");
  for (const ClothRegion& region : cloth) {
    if (region.offset_min < 0.0 || region.offset_max < region.offset_min)
      throw std::runtime_error("synth: cloth offsets must satisfy 0 <= min <= max");
    for (int v : region.vertices)
      if (v < 0 || v >= model.vertex_count())
        throw std::runtime_error("synth: cloth vertex id out of range");
  }
  for (const auto& region : skin_regions)
    for (int v : region)
      if (v < 0 || v >= model.vertex_count())
        throw std::runtime_error("synth: skin vertex id out of range");
  if (noise_sigma < 0.0) throw std::runtime_error("synth: negative noise");
  if (samples_per_frame < 1)
    throw std::runtime_error("synth: samples_per_frame must be >= 1");
}

SynthResult synthesize_sequence(const BodyModel& model, const SynthSpec& spec,
                                std::uint64_t seed) {
  spec.validate(model);
  const int n = model.vertex_count();

  SynthResult out;
  out.true_rest = spec.rest;
  if (out.true_rest.empty()) {
    out.true_rest = model.rest_template;
    if (spec.beta.size() > 0) {
      const auto offsets = shape_blendshape(model, spec.beta);
      for (int i = 0; i < n; ++i) out.true_rest[i] += offsets[i];
    }
  }
  out.poses = spec.poses;

  std::vector<std::uint8_t> cloth_mask(n, 0);
  for (const ClothRegion& region : spec.cloth)
    for (int v : region.vertices) cloth_mask[v] = 1;
  for (const auto& region : spec.skin_regions)
    for (int v : region) cloth_mask[v] = 0;

  Rng rng(seed);
  for (const Pose& pose : spec.poses) {
    TriMesh displaced = pose_model(model, out.true_rest, nullptr, pose);
    const std::vector<Vec3> normals = vertex_normals(displaced);
    for (const ClothRegion& region : spec.cloth) {
      const double offset = rng.uniform(region.offset_min, region.offset_max);
      for (int v : region.vertices)
        if (cloth_mask[v]) displaced.vertices[v] += offset * normals[v];
    }

    std::vector<double> cumulative(displaced.face_count());
    double total = 0.0;
    for (int f = 0; f < displaced.face_count(); ++f) {
      const auto& fc = displaced.faces[f];
      const Vec3 e1 = displaced.vertices[fc[1]] - displaced.vertices[fc[0]];
      const Vec3 e2 = displaced.vertices[fc[2]] - displaced.vertices[fc[0]];
      total += 0.5 * e1.cross(e2).norm();
      cumulative[f] = total;
    }

    Scan scan;
    std::vector<PointLabel> labels;
    for (int s = 0; s < spec.samples_per_frame; ++s) {
      const double pick = rng.uniform() * total;
      const int f = static_cast<int>(
          std::lower_bound(cumulative.begin(), cumulative.end(), pick) -
          cumulative.begin());
      const auto& fc = displaced.faces[std::min(f, displaced.face_count() - 1)];
      double u = rng.uniform(), v = rng.uniform();
      if (u + v > 1.0) {
        u = 1.0 - u;
        v = 1.0 - v;
      }
      Vec3 p = displaced.vertices[fc[0]] +
               u * (displaced.vertices[fc[1]] - displaced.vertices[fc[0]]) +
               v * (displaced.vertices[fc[2]] - displaced.vertices[fc[0]]);
      const Vec3 noise(rng.normal(), rng.normal(), rng.normal());
      p += spec.noise_sigma * noise;
      const bool is_cloth =
          cloth_mask[fc[0]] && cloth_mask[fc[1]] && cloth_mask[fc[2]];
      scan.points.push_back(p);
      labels.push_back(is_cloth ? PointLabel::cloth : PointLabel::skin);
    }
    scan.skin_weights = VectorXd::Zero(scan.size());
    for (int i = 0; i < scan.size(); ++i)
      if (labels[i] == PointLabel::skin) scan.skin_weights[i] = 1.0;
    scan.labels = std::move(labels);
    out.scans.push_back(std::move(scan));
  }
  return out;
}

namespace {

/// Cold pose-only anneal: wide kernel and strong prior first, then polish.
std::vector<AnnealPhase> pose_only_schedule() {
  return {
      {1.0, 1.0, 0.04, 3, 10, false, false},
      {0.1, 1.0, 0.02, 3, 10, false, false},
      {0.01, 1.0, 0.0, 3, 10, false, false},
      {1e-8, 1.0, 0.0, 10, 40, false, false},
  };
}

}  // namespace

ErrorSummary registration_error(const TriMesh& result_mesh,
                                const RestShape& reference_rest,
                                const BodyModel& model,
                                const SolverSettings& solver) {
  if (static_cast<int>(reference_rest.size()) != model.vertex_count())
    throw std::runtime_error("registration_error: reference vertex count");
  if (result_mesh.vertex_count() == 0)
    throw std::runtime_error("registration_error: empty result mesh");

  Scan scan;
  scan.points = result_mesh.vertices;
  scan.labels = std::vector<PointLabel>(scan.points.size(), PointLabel::skin);
  scan.skin_weights = VectorXd::Ones(scan.size());

  ParamBlockSet params;
  params.state.rest = reference_rest;
  params.state.beta = VectorXd::Zero(model.shape_dim());
  params.state.pose = Pose::zero(model.joint_count());
  params.active.rest = false;
  params.active.beta = false;

  const ObjectiveConfig base;
  try {
    for (const AnnealPhase& phase : pose_only_schedule()) {
      ObjectiveConfig objective = base;
      objective.lambda_prior = phase.lambda_prior;
      if (phase.sigma_skin > 0.0) objective.sigma_skin = phase.sigma_skin;
      SolverSettings settings = solver;
      settings.max_inner_iterations = phase.max_inner;
      settings.outer_refreshes = phase.refreshes;
      const RefreshResult round =
          solve_with_refresh(scan, model, objective, CouplingAnchor::model_space(),
                             params, settings, SkinWeightMode::all_skin);
      params.state = round.params.state;
    }
  } catch (const std::exception& err) {
    throw std::runtime_error(std::string("registration_error: pose fit diverged: ") +
                             err.what());
  }

  const TriMesh posed =
      pose_model(model, reference_rest, nullptr, params.state.pose);
  const SpatialIndex index(result_mesh);
  VectorXd distances(model.vertex_count());
  for (int i = 0; i < model.vertex_count(); ++i)
    distances[i] = index.closest(posed.vertices[i]).distance;
  if (!distances.allFinite())
    throw std::runtime_error("registration_error: pose fit diverged: "
                             "non-finite distances");
  return summarize_distances(std::move(distances));
}

LandmarkError landmark_error(const SequenceResult& result,
                             const LandmarkSet& landmarks,
                             const BodyModel& model) {
  landmarks.validate(model.vertex_count());
  const int frames = static_cast<int>(result.frames.size());
  if (landmarks.frame_count() != frames)
    throw std::runtime_error("landmarks: frame count != tracked frames");

  LandmarkError out;
  out.per_frame_mean = VectorXd::Constant(frames, 0.0);
  std::vector<double> pooled;
  for (int k = 0; k < frames; ++k) {
    const TriMesh posed = pose_model(model, result.frames[k].detailed, nullptr,
                                     result.frames[k].pose);
    double acc = 0.0;
    int count = 0;
    for (const auto& set : landmarks.correspondence_sets) {
      for (int m = 0; m < landmarks.marker_count(); ++m) {
        const Vec3& marker = landmarks.positions[k][m];
        if (!marker.allFinite()) continue;  // missing in this frame
        const double err = (marker - posed.vertices[set[m]]).norm();
        acc += err;
        pooled.push_back(err);
        ++count;
      }
    }
    out.per_frame_mean[k] =
        count > 0 ? acc / count : std::numeric_limits<double>::quiet_NaN();
  }
  if (pooled.empty()) throw std::runtime_error("landmarks: no valid marker");
  out.pooled = summarize_distances(
      Eigen::Map<const VectorXd>(pooled.data(), pooled.size()));
  return out;
}

std::string frame_records(const VectorXd& per_frame,
                          const std::string& metric) {
  std::string out;
  char line[128];
  for (int k = 0; k < per_frame.size(); ++k) {
    std::snprintf(line, sizeof(line), "frame %d %s %.9g\n", k, metric.c_str(),
                  per_frame[k]);
    out += line;
  }
  return out;
}

std::string summary_table(const std::vector<SummaryRow>& rows) {
  size_t subject_w = 7, motion_w = 6;
  for (const SummaryRow& row : rows) {
    subject_w = std::max(subject_w, row.subject.size());
    motion_w = std::max(motion_w, row.motion.size());
  }
  char line[256];
  std::snprintf(line, sizeof(line), "%-*s  %-*s  %9s\n",
                static_cast<int>(subject_w), "subject",
                static_cast<int>(motion_w), "motion", "rmse(mm)");
  std::string out = line;
  for (const SummaryRow& row : rows) {
    std::snprintf(line, sizeof(line), "%-*s  %-*s  %9.3f\n",
                  static_cast<int>(subject_w), row.subject.c_str(),
                  static_cast<int>(motion_w), row.motion.c_str(), row.rmse_mm);
    out += line;
  }
  return out;
}

}  // namespace mcs
