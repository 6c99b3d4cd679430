#pragma once

#include "affordkit/field.hpp"

namespace affordkit {

struct SoftMaskParams {
    double temperature = 3.0;  // pixels per sigmoid unit
    bool inside_positive = true;
};

/// +distance-to-background on foreground pixels, -distance-to-foreground on
/// background pixels. Throws DegenerateMask for all-0 / all-1 masks.
ScalarField signed_distance(const BinaryMask& m);

/// Sigmoid of the signed distance scaled by 1/temperature; values in (0,1).
ScalarField soft_mask(const BinaryMask& m, const SoftMaskParams& params = {});

/// Keeps gt where the object mask is set and zeroes it elsewhere.
ScalarField intersect_annotation(const ScalarField& gt, const BinaryMask& object_mask);

}  // namespace affordkit
