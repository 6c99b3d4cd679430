#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "affordkit/field.hpp"

namespace affordkit::synth {

struct SyntheticPairConfig {
    int width = 32;
    int height = 32;
    int n_targets = 1;               // 1 or 2 (bimanual)
    double blob_sigma = 2.5;         // px
    int n_fragments = 4;
    double fragment_scatter = 3.0;   // px, radius of the displacement disk
    double noise_texture_scale = 4.0;  // px between noise lattice nodes
    double noise_amplitude = 0.2;
    std::uint64_t seed = 0;
};

struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct SyntheticPair {
    ScalarField x0;        // fragmented, noisy map
    ScalarField x1;        // compact target map, peak 1
    ScalarField x0_clean;  // fragments only, before noise and clamping
    std::vector<Point> gt_points;
};

/// x1 is a peak-normalized sum of isotropic Gaussians at rejection-sampled
/// centers (at least 4 sigma apart, at least 3 sigma + scatter from the
/// border). Each blob is split into n_fragments narrower sub-blobs of equal
/// mass (sigma / sqrt(n_fragments)) displaced uniformly within a disk of
/// radius fragment_scatter; x0 adds bilinearly interpolated lattice noise in
/// [0, amplitude] and clamps to [0,1]. Throws PlacementFailure after
/// 1000 rejected placements.
SyntheticPair gen_pair(const SyntheticPairConfig& c);

/// `count` pairs whose seeds are mix_seed(base.seed, offset + i).
std::vector<SyntheticPair> gen_corpus(const SyntheticPairConfig& base, int count, std::uint64_t offset = 0);

}  // namespace affordkit::synth
