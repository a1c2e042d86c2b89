#include "mcs/pipeline.hpp"

#include <algorithm>
#include <stdexcept>

namespace mcs {

namespace {

/// Run the annealed refresh schedule from `start`, overriding the prior
/// weight, coupling scale, kernel width, and iteration counts per phase.
/// Blocks the stage holds frozen stay frozen regardless of the phase flags.
ParamBlockSet run_schedule(const Scan& scan, const BodyModel& model,
                           const PipelineConfig& cfg, CouplingAnchor anchor,
                           ParamBlockSet start, SkinWeightMode mode,
                           const std::vector<AnnealPhase>& schedule,
                           EnergyReport* final_report) {
  for (const AnnealPhase& phase : schedule) {
    ObjectiveConfig objective = cfg.objective;
    objective.lambda_prior = phase.lambda_prior;
    objective.lambda_cpl = cfg.objective.lambda_cpl * phase.cpl_scale;
    if (phase.sigma_skin > 0.0) objective.sigma_skin = phase.sigma_skin;
    SolverSettings settings = cfg.solver;
    settings.max_inner_iterations = phase.max_inner;
    settings.outer_refreshes = phase.refreshes;

    ParamBlockSet masked = start;
    masked.active.rest = start.active.rest && phase.free_rest;
    masked.active.beta = start.active.beta && phase.free_beta;

    RefreshResult round = solve_with_refresh(scan, model, objective, anchor,
                                             masked, settings, mode);
    start.state = round.params.state;
    if (final_report) *final_report = round.final_report;
  }
  return start;
}

}  // namespace

std::vector<AnnealPhase> PipelineConfig::cold_schedule() {
  return {
      {1.0, 1.0, 0.04, 3, 10, false, false},     // coarse pose
      {0.1, 1.0, 0.02, 3, 10, false, false},
      {0.01, 1.0, 0.0, 3, 10, false, false},
      {1e-8, 1.0, 0.0, 10, 30, false, false},    // pose polish
      {1e-8, 100.0, 0.0, 10, 25, true, true},    // shape on the manifold
      {1e-8, 10.0, 0.0, 10, 15, true, true},     // detail, stiffened
  };
}

std::vector<AnnealPhase> PipelineConfig::warm_schedule() {
  return {
      {0.1, 1.0, 0.02, 3, 5, false, false},
      {0.01, 1.0, 0.0, 3, 5, false, false},
      {1e-8, 1.0, 0.0, 10, 20, false, false},    // pose polish
      {1e-8, 100.0, 0.0, 10, 15, true, true},    // shape on the manifold
      {1e-8, 10.0, 0.0, 10, 10, true, true},     // detail, stiffened
  };
}

std::vector<AnnealPhase> PipelineConfig::fusion_schedule() {
  return {{1e-8, 100.0, 0.0, 25, 20, true, true},
          {1e-8, 10.0, 0.0, 25, 10, true, true}};
}

Scan FusionScan::to_scan() const {
  Scan scan;
  scan.points = points;
  scan.skin_weights = skin_weights;
  std::vector<PointLabel> labels(points.size());
  for (int p = 0; p < size(); ++p)
    labels[p] = skin_weights[p] >= 0.5 ? PointLabel::skin : PointLabel::cloth;
  scan.labels = std::move(labels);
  return scan;
}

CloAlignment register_frame(const Scan& scan, const BodyModel& model,
                            const PipelineConfig& cfg, const Pose& init_pose) {
  scan.validate();
  if (scan.size() == 0)
    throw std::runtime_error("register_frame: empty scan");

  PipelineConfig stage = cfg;
  stage.objective.lambda_outside = 0.0;
  stage.objective.lambda_fit = 0.0;

  ParamBlockSet start;
  start.state.rest = model.rest_template;
  start.state.beta = VectorXd::Zero(model.shape_dim());
  start.state.pose = init_pose;

  CloAlignment out;
  try {
    EnergyReport report;
    const ParamBlockSet fit =
        run_schedule(scan, model, stage, CouplingAnchor::model_space(), start,
                     SkinWeightMode::all_skin, stage.registration, &report);
    out.unposed = fit.state.rest;
    out.pose = fit.state.pose;
    out.report = report;
  } catch (const std::runtime_error&) {
    out.unposed = start.state.rest;
    out.pose = init_pose;
    out.aborted = true;
  }

  // Skin weights of the alignment vertices from this frame's segmentation,
  // evaluated on the posed fit (the surface the scan was segmented against).
  const TriMesh posed = pose_model(model, out.unposed, nullptr, out.pose);
  out.vertex_skin =
      vertex_skin_weights(posed, transfer_labels(posed, scan), cfg.objective);
  return out;
}

std::vector<CloAlignment> register_sequence(const std::vector<Scan>& scans,
                                            const BodyModel& model,
                                            const PipelineConfig& cfg,
                                            const Pose& first_init) {
  std::vector<CloAlignment> alignments;
  alignments.reserve(scans.size());
  Pose carry = first_init;
  for (int k = 0; k < static_cast<int>(scans.size()); ++k) {
    CloAlignment aligned = register_frame(scans[k], model, cfg, carry);
    aligned.frame = k;
    if (!aligned.aborted) carry = aligned.pose;
    alignments.push_back(std::move(aligned));
  }
  return alignments;
}

FusionScan build_fusion_scan(const std::vector<CloAlignment>& alignments) {
  if (alignments.empty())
    throw std::runtime_error("build_fusion_scan: no alignments");
  const int n = static_cast<int>(alignments[0].unposed.size());
  for (const CloAlignment& a : alignments) {
    if (static_cast<int>(a.unposed.size()) != n)
      throw std::runtime_error(
          "build_fusion_scan: alignments disagree on vertex count");
    if (a.vertex_skin.size() != n)
      throw std::runtime_error(
          "build_fusion_scan: skin weights do not match vertices");
  }

  FusionScan fusion;
  fusion.frame_count = static_cast<int>(alignments.size());
  fusion.points.reserve(alignments.size() * n);
  fusion.source_frame.reserve(alignments.size() * n);
  fusion.skin_weights.resize(static_cast<int>(alignments.size()) * n);
  int next = 0;
  for (const CloAlignment& a : alignments) {
    for (int i = 0; i < n; ++i) {
      fusion.points.push_back(a.unposed[i]);
      fusion.source_frame.push_back(a.frame);
      fusion.skin_weights[next++] = a.vertex_skin[i];
    }
  }
  return fusion;
}

FusionShape estimate_fusion_shape(const FusionScan& fusion,
                                  const BodyModel& model,
                                  const PipelineConfig& cfg) {
  if (fusion.size() == 0)
    throw std::runtime_error("estimate_fusion_shape: empty fusion scan");

  // Deterministic even subsample down to the configured budget.
  Scan scan = fusion.to_scan();
  if (scan.size() > cfg.fusion_budget) {
    Scan kept;
    std::vector<PointLabel> labels;
    kept.skin_weights.resize(cfg.fusion_budget);
    for (int i = 0; i < cfg.fusion_budget; ++i) {
      const int src = static_cast<int>(static_cast<long long>(i) *
                                       scan.size() / cfg.fusion_budget);
      kept.points.push_back(scan.points[src]);
      labels.push_back((*scan.labels)[src]);
      kept.skin_weights[i] = scan.skin_weights[src];
    }
    kept.labels = std::move(labels);
    scan = std::move(kept);
  }

  ParamBlockSet start;
  start.state.rest = model.rest_template;
  start.state.beta = VectorXd::Zero(model.shape_dim());
  start.state.pose = Pose::zero(model.joint_count());
  start.active.theta = false;
  start.active.translation = false;

  EnergyReport report;
  const ParamBlockSet fit =
      run_schedule(scan, model, cfg, CouplingAnchor::model_space(), start,
                   SkinWeightMode::stored, cfg.fusion, &report);
  return {fit.state.rest, fit.state.beta, report};
}

SequenceResult track_sequence(const std::vector<Scan>& scans,
                              const BodyModel& model,
                              const PipelineConfig& cfg,
                              const RestShape& fusion_shape,
                              const VectorXd& beta,
                              const std::vector<Pose>& init_poses) {
  if (static_cast<int>(fusion_shape.size()) != model.vertex_count())
    throw std::runtime_error(
        "track_sequence: fusion shape does not match the model");
  if (!init_poses.empty() && init_poses.size() != 1 &&
      init_poses.size() != scans.size())
    throw std::runtime_error(
        "track_sequence: init_poses must hold 0, 1, or one pose per frame");

  SequenceResult out;
  out.fusion_shape = fusion_shape;
  out.beta = beta;
  const CouplingAnchor anchor = CouplingAnchor::fixed_rest(out.fusion_shape);

  Pose carry = init_poses.empty() ? Pose::zero(model.joint_count())
                                  : init_poses.front();
  for (int k = 0; k < static_cast<int>(scans.size()); ++k) {
    scans[k].validate();
    ParamBlockSet start;
    start.state.rest = out.fusion_shape;
    start.state.beta = beta.size() ? beta : VectorXd::Zero(model.shape_dim());
    start.state.pose = init_poses.size() == scans.size() ? init_poses[k]
                                                         : carry;
    start.active.beta = false;

    FrameTrack track;
    try {
      EnergyReport report;
      const ParamBlockSet fit =
          run_schedule(scans[k], model, cfg, anchor, start,
                       SkinWeightMode::from_labels, cfg.tracking, &report);
      track.pose = fit.state.pose;
      track.detailed = fit.state.rest;
      track.report = report;
    } catch (const std::runtime_error&) {
      track.pose = start.state.pose;
      track.detailed = start.state.rest;
      track.aborted = true;
    }
    carry = track.pose;
    out.frames.push_back(std::move(track));
  }
  return out;
}

GtEstimate estimate_gt_mcs(const std::vector<Scan>& minimal_scans,
                           const BodyModel& model, const PipelineConfig& cfg) {
  if (minimal_scans.empty())
    throw std::runtime_error("estimate_gt_mcs: no scans");

  GtEstimate out;
  out.fits.reserve(minimal_scans.size());
  std::vector<RestShape> shapes;
  for (int k = 0; k < static_cast<int>(minimal_scans.size()); ++k) {
    // Frames are independent: every fit starts from the prior mean pose.
    CloAlignment fit = register_frame(minimal_scans[k], model, cfg,
                                      Pose::zero(model.joint_count()));
    fit.frame = k;
    shapes.push_back(fit.unposed);
    out.fits.push_back(std::move(fit));
  }
  out.mean_rest = mean_rest_shapes(shapes);
  return out;
}

RestShape mean_rest_shapes(const std::vector<RestShape>& shapes) {
  if (shapes.empty())
    throw std::runtime_error("mean_rest_shapes: no shapes");
  const std::size_t n = shapes[0].size();
  for (const RestShape& s : shapes)
    if (s.size() != n)
      throw std::runtime_error("mean_rest_shapes: size mismatch");

  RestShape mean(n, Vec3::Zero());
  std::vector<double> column(shapes.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      for (std::size_t k = 0; k < shapes.size(); ++k)
        column[k] = shapes[k][i][c];
      // Sorted accumulation: the sum (hence the mean) is bit-identical under
      // any permutation of the input shapes.
      std::sort(column.begin(), column.end());
      double acc = 0.0;
      for (double v : column) acc += v;
      mean[i][c] = acc / static_cast<double>(shapes.size());
    }
  }
  return mean;
}

}  // namespace mcs
