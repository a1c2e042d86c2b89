#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcs/pipeline.hpp"

namespace mcs {

/// One sample of a cumulative error curve: the fraction of measurements
/// with error <= threshold.
struct CurvePoint {
  double threshold = 0.0;  // meters
  double fraction = 0.0;   // in [0, 1]
};

/// Distances in meters plus the derived statistics. The curve is sampled at
/// every distinct distance value, is monotone nondecreasing, and reaches 1
/// at the maximum.
struct ErrorSummary {
  VectorXd distances;
  double rmse = 0.0;
  double mean = 0.0;
  double median = 0.0;
  std::vector<CurvePoint> curve;
};

/// Statistics + cumulative curve of a nonempty set of distances (meters).
/// Median of an even count is the midpoint of the two central values.
ErrorSummary summarize_distances(VectorXd distances);

/// Motion-capture style landmarks: positions[frame][marker] in meters, and
/// one or more correspondence sets mapping marker index -> model vertex id.
/// A non-finite position marks the marker missing in that frame.
struct LandmarkSet {
  std::vector<std::vector<Vec3>> positions;
  std::vector<std::vector<int>> correspondence_sets;

  int frame_count() const { return static_cast<int>(positions.size()); }
  int marker_count() const {
    return positions.empty() ? 0 : static_cast<int>(positions[0].size());
  }
  /// Throws unless every frame carries the same marker count, every set maps
  /// every marker, and every vertex id is in [0, vertex_count).
  void validate(int vertex_count) const;
};

/// Per-frame mean landmark error plus the curve pooled over every
/// (frame, set, marker) measurement. Frames with no valid marker carry NaN.
struct LandmarkError {
  VectorXd per_frame_mean;
  ErrorSummary pooled;
};

/// A connected vertex set worn by cloth, displaced outward along vertex
/// normals by a per-frame offset drawn uniformly from [offset_min,
/// offset_max] (meters, both >= 0).
struct ClothRegion {
  std::vector<int> vertices;
  double offset_min = 0.0;
  double offset_max = 0.0;
};

/// Recipe for a synthetic clothed sequence. The true rest shape is `rest`
/// when nonempty, otherwise the model template shaped by `beta`. Vertices in
/// `skin_regions` stay skin even when a cloth region claims them.
struct SynthSpec {
  VectorXd beta;
  RestShape rest;
  std::vector<Pose> poses;
  std::vector<ClothRegion> cloth;
  std::vector<std::vector<int>> skin_regions;
  double noise_sigma = 0.0;    // isotropic Gaussian, meters
  int samples_per_frame = 4000;

  void validate(const BodyModel& model) const;  // throws on violations
};

/// Synthetic sequence plus its ground truth.
struct SynthResult {
  std::vector<Scan> scans;
  RestShape true_rest;
  std::vector<Pose> poses;
};

/// Generate a labeled scan per pose: pose the true body, push cloth-region
/// vertices outward along posed vertex normals (never inward), sample the
/// displaced surface area-uniformly, then add Gaussian noise. A sample is
/// labeled cloth only when all three corners of its face are cloth, so cloth
/// points lie strictly outside the true body when offsets are positive and
/// noise is zero. Bit-identical for equal seeds.
SynthResult synthesize_sequence(const BodyModel& model, const SynthSpec& spec,
                                std::uint64_t seed);

/// Distance from a reconstructed surface to the reference shape: fits the
/// reference rest shape to the result mesh over pose and translation only
/// (template and shape frozen), then measures each posed reference vertex's
/// distance to the result surface. `solver` supplies trust-region geometry
/// and stopping tolerances; iteration counts follow an internal cold-pose
/// schedule. Throws std::runtime_error when the pose fit diverges (the
/// metric is withheld rather than reported from a bad fit).
ErrorSummary registration_error(const TriMesh& result_mesh,
                                const RestShape& reference_rest,
                                const BodyModel& model,
                                const SolverSettings& solver);

/// Landmark error of a tracked sequence: per frame, the mean over
/// correspondence sets and valid markers of the distance between the marker
/// and the posed result vertex it corresponds to.
LandmarkError landmark_error(const SequenceResult& result,
                             const LandmarkSet& landmarks,
                             const BodyModel& model);

/// One structured text record per frame: "frame <k> <metric> <value>".
/// NaN entries (frames without valid markers) render as "nan".
std::string frame_records(const VectorXd& per_frame, const std::string& metric);

/// Row of the evaluation summary table.
struct SummaryRow {
  std::string subject;
  std::string motion;
  double rmse_mm = 0.0;
};

/// Fixed-width table: subject x motion -> RMSE in millimeters.
std::string summary_table(const std::vector<SummaryRow>& rows);

}  // namespace mcs
