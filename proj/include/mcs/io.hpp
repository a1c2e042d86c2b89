#pragma once

#include <string>
#include <vector>

#include "mcs/objective.hpp"
#include "mcs/optimizer.hpp"

namespace mcs {

/// Vertices plus optional triangle faces, as read from a mesh file.
struct MeshData {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
};

/// Read a .ply (ascii or binary_little_endian) or .obj file. Unknown PLY
/// elements and properties are skipped; faces must be triangles. Every
/// parse error names the file and the line (ascii) or byte offset (binary).
MeshData load_mesh(const std::string& path);

/// Write vertices (and faces, when present) as PLY: binary little-endian
/// 64-bit floats by default, ascii with %.17g otherwise. Either form
/// round-trips doubles exactly.
void save_ply(const std::string& path, const MeshData& mesh,
              bool binary = true);

/// Load a point cloud as a scan, scaling coordinates by `scale` (e.g. 1e-3
/// for millimeter inputs). A sidecar file `<path>.labels` with one
/// `skin`/`cloth` token per point attaches labels; without it every point
/// is cloth. Non-finite coordinates and label/point count mismatches are
/// rejected with descriptive errors.
Scan load_scan(const std::string& path, double scale = 1.0);

/// One `skin`/`cloth` token per line.
void save_labels(const std::string& path,
                 const std::vector<PointLabel>& labels);

/// Binary model container (magic "MCSM", version 1, little-endian payload,
/// CRC-32 trailer). Loading re-validates every body-model invariant.
void save_model(const std::string& path, const BodyModel& model);
BodyModel load_model(const std::string& path);

/// One text line per frame: frame index then 3K+3 floats (joint rotations,
/// then translation), written with %.17g so doubles round-trip exactly.
struct PoseRecord {
  int frame = 0;
  Pose pose;
};
void save_pose_records(const std::string& path,
                       const std::vector<PoseRecord>& records);
std::vector<PoseRecord> load_pose_records(const std::string& path);

/// One %.17g value per line (shape coefficients, per-point weights).
void save_vector(const std::string& path, const VectorXd& values);
VectorXd load_vector(const std::string& path);

/// Everything a run reads from disk besides the data itself: term weights
/// and kernel widths, solver settings, the fusion point budget, and output
/// toggles. Serialized as `key = value` lines; unknown keys are rejected.
struct RunConfig {
  ObjectiveConfig objective;
  SolverSettings solver;
  int fusion_budget = 150000;
  bool emit_meshes = true;  // write per-frame mesh artifacts
  bool emit_poses = true;   // write pose record artifacts
  std::string out_dir;      // default output directory ("" = required flag)
};

/// Parse a config document. Rejects unknown keys, malformed lines, and
/// unparsable values, naming the line. Later assignments win.
RunConfig parse_run_config(const std::string& text);

/// Fixed key order, %.17g floats; parse(serialize(c)) reproduces c exactly.
std::string serialize_run_config(const RunConfig& config);

RunConfig load_run_config(const std::string& path);

}  // namespace mcs
