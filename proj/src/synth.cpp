#include "affordkit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "affordkit/rng.hpp"

namespace affordkit::synth {

namespace {

void validate(const SyntheticPairConfig& c) {
    if (c.width <= 0 || c.height <= 0) fail(ErrorCode::InvalidArgument, "synthetic size must be positive");
    if (c.n_targets < 1 || c.n_targets > 2) fail(ErrorCode::InvalidArgument, "n_targets must be 1 or 2");
    if (!(c.blob_sigma > 0.0)) fail(ErrorCode::InvalidArgument, "blob_sigma must be positive");
    if (c.n_fragments < 1) fail(ErrorCode::InvalidArgument, "n_fragments must be >= 1");
    if (c.fragment_scatter < 0.0) fail(ErrorCode::InvalidArgument, "fragment_scatter must be non-negative");
    if (!(c.noise_texture_scale > 0.0)) fail(ErrorCode::InvalidArgument, "noise_texture_scale must be positive");
    if (c.noise_amplitude < 0.0) fail(ErrorCode::InvalidArgument, "noise_amplitude must be non-negative");
}

void add_gaussian(ScalarField& f, double cx, double cy, double sigma, double amplitude) {
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (int y = 0; y < f.height(); ++y) {
        for (int x = 0; x < f.width(); ++x) {
            const double dx = x - cx;
            const double dy = y - cy;
            f(x, y) += amplitude * std::exp(-(dx * dx + dy * dy) * inv);
        }
    }
}

}  // namespace

SyntheticPair gen_pair(const SyntheticPairConfig& c) {
    validate(c);
    Rng rng(c.seed);

    const double margin = 3.0 * c.blob_sigma + c.fragment_scatter;
    const double lo_x = margin;
    const double hi_x = c.width - 1 - margin;
    const double lo_y = margin;
    const double hi_y = c.height - 1 - margin;
    const double min_sep = 4.0 * c.blob_sigma;

    std::vector<Point> centers;
    int attempts = 0;
    while (static_cast<int>(centers.size()) < c.n_targets) {
        if (++attempts > 1000 || hi_x < lo_x || hi_y < lo_y) {
            fail(ErrorCode::PlacementFailure, "could not place targets after 1000 attempts");
        }
        const Point p{rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y)};
        const bool clear = std::all_of(centers.begin(), centers.end(), [&](const Point& q) {
            return std::hypot(p.x - q.x, p.y - q.y) >= min_sep;
        });
        if (clear) {
            centers.push_back(p);
        } else if (!centers.empty() && attempts % 50 == 0) {
            centers.clear();  // first center may leave no room for the second
        }
    }

    ScalarField x1(c.width, c.height);
    for (const auto& p : centers) add_gaussian(x1, p.x, p.y, c.blob_sigma, 1.0);
    const double peak_scale = 1.0 / x1.max();
    x1 *= peak_scale;

    // Equal-mass fragments: amplitude * 2 pi s^2 = (2 pi sigma^2) / n with s^2 = sigma^2 / n.
    ScalarField clean(c.width, c.height);
    const double frag_sigma = c.blob_sigma / std::sqrt(static_cast<double>(c.n_fragments));
    for (const auto& p : centers) {
        for (int k = 0; k < c.n_fragments; ++k) {
            const double radius = c.fragment_scatter * std::sqrt(rng.uniform());
            const double theta = 2.0 * std::numbers::pi * rng.uniform();
            add_gaussian(clean, p.x + radius * std::cos(theta), p.y + radius * std::sin(theta), frag_sigma, peak_scale);
        }
    }

    ScalarField x0 = clean;
    if (c.noise_amplitude > 0.0) {
        const int gw = static_cast<int>(std::ceil((c.width - 1) / c.noise_texture_scale)) + 2;
        const int gh = static_cast<int>(std::ceil((c.height - 1) / c.noise_texture_scale)) + 2;
        std::vector<double> lattice(static_cast<std::size_t>(gw) * gh);
        for (double& v : lattice) v = rng.uniform();
        auto node = [&](int i, int j) { return lattice[static_cast<std::size_t>(j) * gw + i]; };
        for (int y = 0; y < c.height; ++y) {
            const double gy = y / c.noise_texture_scale;
            const int j = static_cast<int>(gy);
            const double fy = gy - j;
            for (int x = 0; x < c.width; ++x) {
                const double gx = x / c.noise_texture_scale;
                const int i = static_cast<int>(gx);
                const double fx = gx - i;
                const double top = (1 - fx) * node(i, j) + fx * node(i + 1, j);
                const double bottom = (1 - fx) * node(i, j + 1) + fx * node(i + 1, j + 1);
                x0(x, y) += c.noise_amplitude * ((1 - fy) * top + fy * bottom);
            }
        }
    }
    for (double& v : x0.values()) v = std::clamp(v, 0.0, 1.0);

    return {std::move(x0), std::move(x1), std::move(clean), std::move(centers)};
}

std::vector<SyntheticPair> gen_corpus(const SyntheticPairConfig& base, int count, std::uint64_t offset) {
    std::vector<SyntheticPair> out;
    out.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int i = 0; i < count; ++i) {
        SyntheticPairConfig c = base;
        c.seed = mix_seed(base.seed, offset + static_cast<std::uint64_t>(i));
        out.push_back(gen_pair(c));
    }
    return out;
}

}  // namespace affordkit::synth
