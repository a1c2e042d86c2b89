#pragma once

#include "mcs/body_model.hpp"

namespace mcs {

/// Procedurally generated test body: a closed star-shaped humanoid
/// (N = 1002 vertices, K = 8 joints, B = 4 shape coefficients) with
/// analytically defined bases, regressor, weights, prior, and part labels.
/// Deterministic; passes BodyModel::validate(). Dimensions are in meters
/// at roughly human scale (~1 m tall).
///
/// Parts: 0 pelvis, 1 spine, 2 chest, 3 head, 4/5 left/right arm,
/// 6/7 left/right leg, 8/9 hands, 10/11 feet (tips get stronger coupling).
BodyModel make_humanoid_model();

/// Part ids of the torso region (worn by cloth in the synthetic scenes).
std::vector<int> torso_parts();

/// Per-vertex coupling weights from part labels: 1 everywhere, tip parts
/// (hands/feet) scaled by strong_factor.
VectorXd coupling_weights_from_parts(const std::vector<int>& part_labels,
                                     double strong_factor);

}  // namespace mcs
