#include "affordkit/softmask.hpp"

#include <cmath>

namespace affordkit {

ScalarField signed_distance(const BinaryMask& m) {
    const std::size_t fg = m.count();
    if (fg == 0 || fg == m.size()) fail(ErrorCode::DegenerateMask, "mask must contain both 0 and 1 pixels");
    ScalarField d = distance_transform(m);
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (!m[i]) d[i] = -d[i];
    }
    return d;
}

ScalarField soft_mask(const BinaryMask& m, const SoftMaskParams& params) {
    if (!(params.temperature > 0.0)) fail(ErrorCode::InvalidArgument, "soft mask temperature must be positive");
    ScalarField s = signed_distance(m);
    const double sign = params.inside_positive ? 1.0 : -1.0;
    for (double& v : s.values()) v = 1.0 / (1.0 + std::exp(-sign * v / params.temperature));
    return s;
}

ScalarField intersect_annotation(const ScalarField& gt, const BinaryMask& object_mask) {
    require_same_shape(gt, object_mask, "intersect_annotation: gt and mask differ in size");
    ScalarField out = gt;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!object_mask[i]) out[i] = 0.0;
    }
    return out;
}

}  // namespace affordkit
