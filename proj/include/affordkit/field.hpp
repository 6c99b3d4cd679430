#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "affordkit/error.hpp"

namespace affordkit {

/// Row-major 2-D grid of doubles. Heatmaps, masks-as-reals, velocities and
/// accelerations all live in this type; the role is assigned by the caller.
class ScalarField {
public:
    ScalarField() = default;
    ScalarField(int width, int height, double fill = 0.0);
    /// Throws DimensionMismatch if data.size() != width*height and
    /// NonFiniteValue if any entry is NaN/Inf.
    ScalarField(int width, int height, std::vector<double> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(int x, int y) { return data_[index(x, y)]; }
    double operator()(int x, int y) const { return data_[index(x, y)]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    bool same_shape(const ScalarField& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_;
    }

    double sum() const;
    double max() const;
    double min() const;
    bool all_finite() const;

    ScalarField& operator+=(const ScalarField& rhs);
    ScalarField& operator-=(const ScalarField& rhs);
    ScalarField& operator*=(double s);

    friend bool operator==(const ScalarField&, const ScalarField&) = default;

private:
    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

ScalarField operator+(ScalarField lhs, const ScalarField& rhs);
ScalarField operator-(ScalarField lhs, const ScalarField& rhs);
ScalarField operator*(ScalarField lhs, double s);
ScalarField operator*(double s, ScalarField rhs);

/// Grid whose every element is exactly 0 or 1.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int width, int height, std::uint8_t fill = 0);
    /// Throws InvalidArgument if any value is not 0/1.
    BinaryMask(int width, int height, std::vector<std::uint8_t> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }

    bool operator()(int x, int y) const { return data_[index(x, y)] != 0; }
    bool operator[](std::size_t i) const { return data_[i] != 0; }
    void set(int x, int y, bool v) { data_[index(x, y)] = v ? 1 : 0; }
    void set(std::size_t i, bool v) { data_[i] = v ? 1 : 0; }

    std::size_t count() const;
    BinaryMask complement() const;
    ScalarField to_field() const;

    template <class Field>
    bool same_shape(const Field& other) const noexcept {
        return width_ == other.width() && height_ == other.height();
    }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

struct LabelField {
    int width = 0;
    int height = 0;
    int count = 0;  // number of components K; labels are 1..K
    std::vector<int> labels;

    int operator()(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

struct GradientPair {
    ScalarField gx;
    ScalarField gy;
};

template <class A, class B>
void require_same_shape(const A& a, const B& b, const char* what) {
    if (a.width() != b.width() || a.height() != b.height()) {
        fail(ErrorCode::DimensionMismatch, what);
    }
}

ScalarField sum_normalize(const ScalarField& f);
ScalarField minmax_normalize(const ScalarField& f);
/// Population standard deviation.
ScalarField zscore_normalize(const ScalarField& f);

/// Sobel response with edge-replicate padding. gx correlates with
/// [[-1,0,1],[-2,0,2],[-1,0,1]], gy with its transpose.
GradientPair sobel_gradients(const ScalarField& f);

/// Adjoint of sobel_gradients: returns Sx^T rx + Sy^T ry, including the
/// replicate-padding scatter back onto border pixels.
ScalarField sobel_adjoint(const ScalarField& rx, const ScalarField& ry);

/// Exact Euclidean distance from each pixel to the nearest pixel of the
/// opposite class (center to center). Pixels with no opposite-class pixel
/// anywhere get width+height.
ScalarField distance_transform(const BinaryMask& m);

/// Exact Euclidean distance from every pixel to the nearest set pixel of
/// `features` (0 on the features themselves); width+height if none are set.
ScalarField distance_to(const BinaryMask& features);

LabelField connected_components(const BinaryMask& m, int connectivity);

/// Pixels within `width_px` (Euclidean) of the boundary of {g >= threshold}.
/// The boundary is the set of super-threshold pixels having at least one
/// in-image 4-neighbour below threshold.
BinaryMask boundary_mask(const ScalarField& g, double threshold, int width_px);

BinaryMask threshold_mask(const ScalarField& f, double threshold);

ScalarField read_field(const std::filesystem::path& path);
void write_field(const ScalarField& f, const std::filesystem::path& path);
BinaryMask read_mask(const std::filesystem::path& path);
void write_mask(const BinaryMask& m, const std::filesystem::path& path);

ScalarField parse_field(std::string_view text);
std::string format_field(const ScalarField& f);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_real(double v);

}  // namespace affordkit
