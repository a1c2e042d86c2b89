#pragma once

#include <utility>
#include <vector>

#include "mcs/optimizer.hpp"

namespace mcs {

/// One phase of the annealed ICP-style refresh loop. Early phases carry a
/// strong pose prior and a widened skin kernel so provisional
/// correspondences cannot contort weakly constrained joints; template and
/// shape stay frozen while the pose settles (cheap, small systems), then a
/// strongly coupled phase lets the shape catch up without absorbing pose
/// error, and the final phases polish at the configured weights.
struct AnnealPhase {
  double lambda_prior = 1e-3;
  double cpl_scale = 1.0;   // multiplies the configured coupling weight
  double sigma_skin = 0.0;  // <= 0 keeps the configured kernel width
  int max_inner = 3;        // trust-region iterations per refresh
  int refreshes = 15;
  bool free_rest = true;    // release the template block this phase
  bool free_beta = true;    // release the shape block this phase
};

/// Shared configuration of the pipeline stages. The schedules override
/// prior weight / coupling scale / kernel width / iteration counts per
/// phase; everything else in objective and solver applies as-is. A phase
/// never unfreezes a block the stage itself holds fixed.
struct PipelineConfig {
  ObjectiveConfig objective;
  SolverSettings solver;
  std::vector<AnnealPhase> registration = cold_schedule();
  std::vector<AnnealPhase> tracking = warm_schedule();
  std::vector<AnnealPhase> fusion = fusion_schedule();
  int fusion_budget = 150000;  // fusion points kept for the shape solve

  /// Cold-start schedule (pose unknown).
  static std::vector<AnnealPhase> cold_schedule();
  /// Warm-start schedule (pose inherited from the previous frame).
  static std::vector<AnnealPhase> warm_schedule();
  /// Zero-pose shape fit: strong coupling first so the template
  /// redistributes onto the shape manifold, then the configured weights.
  static std::vector<AnnealPhase> fusion_schedule();
};

/// A clothed per-frame alignment: the fitted template in rest coordinates,
/// its pose, and per-vertex skin weights from the frame's segmentation.
/// Posing `unposed` with `pose` reproduces the fitted surface exactly.
struct CloAlignment {
  int frame = -1;
  RestShape unposed;
  Pose pose;
  VectorXd vertex_skin;
  EnergyReport report;   // at the solution, final correspondences
  bool aborted = false;  // solver abort; pose carried from the initializer
};

/// Union of all unposed alignment vertices, treated as one point cloud.
struct FusionScan {
  std::vector<Vec3> points;
  VectorXd skin_weights;
  std::vector<int> source_frame;  // parallel to points
  int frame_count = 0;

  int size() const { return static_cast<int>(points.size()); }
  /// View as a solvable scan: weights stored per point, weight >= 0.5 labels
  /// a point skin.
  Scan to_scan() const;
};

/// Result of the fusion-shape stage.
struct FusionShape {
  RestShape rest;
  VectorXd beta;
  EnergyReport report;
};

/// One tracked frame: pose plus the detailed per-frame template.
struct FrameTrack {
  Pose pose;
  RestShape detailed;
  EnergyReport report;
  bool aborted = false;
};

/// Full output of the tracking stage. Every detailed template shares the
/// fusion shape's topology (same vertex count and order).
struct SequenceResult {
  RestShape fusion_shape;
  VectorXd beta;
  std::vector<FrameTrack> frames;
};

/// Fit one clothed scan: all points treated as skin with weight 1, no cloth
/// terms, coupling anchored to the model shape space, template + shape +
/// pose + translation all free. vertex_skin is computed afterwards from the
/// scan's labels via the geodesic-logistic transfer on the posed fit.
/// Throws on an empty or invalid scan; a solver abort returns the
/// initializer state flagged `aborted`.
CloAlignment register_frame(const Scan& scan, const BodyModel& model,
                            const PipelineConfig& cfg, const Pose& init_pose);

/// Register every frame in order, initializing each from the previous
/// frame's pose (aborted frames pass the last good pose through).
std::vector<CloAlignment> register_sequence(const std::vector<Scan>& scans,
                                            const BodyModel& model,
                                            const PipelineConfig& cfg,
                                            const Pose& first_init);

/// Concatenate the unposed alignment vertices of all frames. Throws when
/// alignments are empty or disagree on vertex count.
FusionScan build_fusion_scan(const std::vector<CloAlignment>& alignments);

/// Fit the minimally clothed shape to the fusion scan at pose fixed to zero,
/// optimizing template and shape coefficients only. The fusion scan is
/// deterministically subsampled to cfg.fusion_budget points first.
FusionShape estimate_fusion_shape(const FusionScan& fusion,
                                  const BodyModel& model,
                                  const PipelineConfig& cfg);

/// Track a sequence against a fixed fusion shape: per frame, template +
/// pose + translation move with the coupling anchored to fusion_shape and
/// shape coefficients frozen. Frame k starts from frame k-1's pose;
/// init_poses may hold nothing (zero start), the first frame's pose, or one
/// override per frame. Aborted frames carry the previous pose.
SequenceResult track_sequence(const std::vector<Scan>& scans,
                              const BodyModel& model,
                              const PipelineConfig& cfg,
                              const RestShape& fusion_shape,
                              const VectorXd& beta,
                              const std::vector<Pose>& init_poses = {});

/// Reference estimate from minimal-clothing scans: every frame is fit
/// independently (all points skin, zero-pose start) and the estimate is the
/// per-vertex mean of the unposed fits.
struct GtEstimate {
  RestShape mean_rest;
  std::vector<CloAlignment> fits;
};
GtEstimate estimate_gt_mcs(const std::vector<Scan>& minimal_scans,
                           const BodyModel& model, const PipelineConfig& cfg);

/// Per-vertex arithmetic mean of equally sized rest shapes. Summation is
/// performed in sorted coordinate order, so the result is bit-identical
/// under any permutation of the input.
RestShape mean_rest_shapes(const std::vector<RestShape>& shapes);

}  // namespace mcs
