#include "affordkit/field.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

namespace affordkit {

namespace {

void check_dims(int width, int height) {
    if (width <= 0 || height <= 0) {
        fail(ErrorCode::InvalidArgument, "field dimensions must be positive");
    }
}

}  // namespace

ScalarField::ScalarField(int width, int height, double fill) : width_(width), height_(height) {
    check_dims(width, height);
    if (!std::isfinite(fill)) fail(ErrorCode::NonFiniteValue, "fill value is not finite");
    data_.assign(static_cast<std::size_t>(width) * height, fill);
}

ScalarField::ScalarField(int width, int height, std::vector<double> data)
    : width_(width), height_(height), data_(std::move(data)) {
    check_dims(width, height);
    if (data_.size() != static_cast<std::size_t>(width) * height) {
        fail(ErrorCode::DimensionMismatch, "data length does not equal width*height");
    }
    if (!all_finite()) fail(ErrorCode::NonFiniteValue, "field contains NaN or Inf");
}

double ScalarField::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double ScalarField::max() const { return *std::max_element(data_.begin(), data_.end()); }

double ScalarField::min() const { return *std::min_element(data_.begin(), data_.end()); }

bool ScalarField::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

ScalarField& ScalarField::operator+=(const ScalarField& rhs) {
    require_same_shape(*this, rhs, "field addition");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
    return *this;
}

ScalarField& ScalarField::operator-=(const ScalarField& rhs) {
    require_same_shape(*this, rhs, "field subtraction");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
    return *this;
}

ScalarField& ScalarField::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

ScalarField operator+(ScalarField lhs, const ScalarField& rhs) { return lhs += rhs; }
ScalarField operator-(ScalarField lhs, const ScalarField& rhs) { return lhs -= rhs; }
ScalarField operator*(ScalarField lhs, double s) { return lhs *= s; }
ScalarField operator*(double s, ScalarField rhs) { return rhs *= s; }

BinaryMask::BinaryMask(int width, int height, std::uint8_t fill) : width_(width), height_(height) {
    check_dims(width, height);
    if (fill > 1) fail(ErrorCode::InvalidArgument, "mask fill must be 0 or 1");
    data_.assign(static_cast<std::size_t>(width) * height, fill);
}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
    check_dims(width, height);
    if (data_.size() != static_cast<std::size_t>(width) * height) {
        fail(ErrorCode::DimensionMismatch, "mask length does not equal width*height");
    }
    if (std::any_of(data_.begin(), data_.end(), [](std::uint8_t v) { return v > 1; })) {
        fail(ErrorCode::InvalidArgument, "mask values must be 0 or 1");
    }
}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

BinaryMask BinaryMask::complement() const {
    BinaryMask out = *this;
    for (auto& v : out.data_) v = 1 - v;
    return out;
}

ScalarField BinaryMask::to_field() const {
    std::vector<double> values(data_.begin(), data_.end());
    return ScalarField(width_, height_, std::move(values));
}

ScalarField sum_normalize(const ScalarField& f) {
    double total = 0.0;
    for (double v : f.values()) {
        if (v < 0.0) fail(ErrorCode::NegativeValue, "sum_normalize requires non-negative values");
        total += v;
    }
    if (total <= 0.0) fail(ErrorCode::AllZeroField, "sum_normalize of an all-zero field");
    ScalarField out = f;
    out *= 1.0 / total;
    return out;
}

ScalarField minmax_normalize(const ScalarField& f) {
    const double lo = f.min();
    const double hi = f.max();
    if (hi <= lo) fail(ErrorCode::ZeroVariance, "minmax_normalize of a constant field");
    ScalarField out = f;
    for (double& v : out.values()) v = (v - lo) / (hi - lo);
    return out;
}

ScalarField zscore_normalize(const ScalarField& f) {
    const auto n = static_cast<double>(f.size());
    const double mean = f.sum() / n;
    double var = 0.0;
    for (double v : f.values()) var += (v - mean) * (v - mean);
    var /= n;
    const auto [lo, hi] = std::minmax_element(f.values().begin(), f.values().end());
    if (f.size() < 2 || *lo == *hi || !(var > 0.0)) {
        fail(ErrorCode::ZeroVariance, "zscore_normalize needs nonzero variance");
    }
    const double sd = std::sqrt(var);
    ScalarField out = f;
    for (double& v : out.values()) v = (v - mean) / sd;
    return out;
}

namespace {

constexpr int kSobelX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
constexpr int kSobelY[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

void require_sobel_size(const ScalarField& f) {
    if (f.width() < 3 || f.height() < 3) fail(ErrorCode::FieldTooSmall, "Sobel needs at least 3x3");
}

}  // namespace

GradientPair sobel_gradients(const ScalarField& f) {
    require_sobel_size(f);
    const int w = f.width();
    const int h = f.height();
    GradientPair out{ScalarField(w, h), ScalarField(w, h)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int x0 = std::max(x - 1, 0);
            const int x1 = std::min(x + 1, w - 1);
            const int y0 = std::max(y - 1, 0);
            const int y1 = std::min(y + 1, h - 1);
            // Written as differences so a locally constant input gives exact zeros.
            const double sx = (f(x1, y0) - f(x0, y0)) + 2.0 * (f(x1, y) - f(x0, y)) + (f(x1, y1) - f(x0, y1));
            const double sy = (f(x0, y1) - f(x0, y0)) + 2.0 * (f(x, y1) - f(x, y0)) + (f(x1, y1) - f(x1, y0));
            out.gx(x, y) = sx;
            out.gy(x, y) = sy;
        }
    }
    return out;
}

ScalarField sobel_adjoint(const ScalarField& rx, const ScalarField& ry) {
    require_same_shape(rx, ry, "sobel_adjoint inputs");
    require_sobel_size(rx);
    const int w = rx.width();
    const int h = rx.height();
    ScalarField out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double a = rx(x, y);
            const double b = ry(x, y);
            for (int dy = -1; dy <= 1; ++dy) {
                const int yy = std::clamp(y + dy, 0, h - 1);
                for (int dx = -1; dx <= 1; ++dx) {
                    const int xx = std::clamp(x + dx, 0, w - 1);
                    out(xx, yy) += kSobelX[dy + 1][dx + 1] * a + kSobelY[dy + 1][dx + 1] * b;
                }
            }
        }
    }
    return out;
}

namespace {

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) on one line of
// squared distances. `f` and `d` have length n; works in place via scratch.
void squared_dt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                   std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    constexpr double inf = std::numeric_limits<double>::infinity();
    int k = 0;
    v[0] = 0;
    z[0] = -inf;
    z[1] = inf;
    auto intersect = [&](int q, int p) {
        return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * q - 2.0 * p);
    };
    for (int q = 1; q < n; ++q) {
        double s = intersect(q, v[k]);
        while (s <= z[k]) {
            --k;
            s = intersect(q, v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = inf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

}  // namespace

ScalarField distance_to(const BinaryMask& features) {
    const int w = features.width();
    const int h = features.height();
    const double sentinel = static_cast<double>(w + h);
    if (features.count() == 0) return ScalarField(w, h, sentinel);

    // Finite stand-in for infinity: far above any reachable squared distance
    // while keeping the envelope arithmetic free of inf-inf.
    const double big = 1e20;
    const int n = std::max(w, h);
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);
    std::vector<double> sq(static_cast<std::size_t>(w) * h);

    for (int x = 0; x < w; ++x) {
        f.resize(h);
        d.resize(h);
        for (int y = 0; y < h; ++y) f[y] = features(x, y) ? 0.0 : big;
        squared_dt_1d(f, d, v, z);
        for (int y = 0; y < h; ++y) sq[static_cast<std::size_t>(y) * w + x] = d[y];
    }
    ScalarField out(w, h);
    f.resize(w);
    d.resize(w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) f[x] = sq[static_cast<std::size_t>(y) * w + x];
        squared_dt_1d(f, d, v, z);
        for (int x = 0; x < w; ++x) out(x, y) = d[x] >= big ? sentinel : std::sqrt(d[x]);
    }
    return out;
}

ScalarField distance_transform(const BinaryMask& m) {
    const ScalarField to_ones = distance_to(m);
    const ScalarField to_zeros = distance_to(m.complement());
    ScalarField out(m.width(), m.height());
    for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] ? to_zeros[i] : to_ones[i];
    return out;
}

LabelField connected_components(const BinaryMask& m, int connectivity) {
    if (connectivity != 4 && connectivity != 8) {
        fail(ErrorCode::InvalidArgument, "connectivity must be 4 or 8");
    }
    const int w = m.width();
    const int h = m.height();
    LabelField out{w, h, 0, std::vector<int>(m.size(), 0)};
    std::deque<std::pair<int, int>> queue;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!m(x, y) || out(x, y) != 0) continue;
            const int label = ++out.count;
            out.labels[static_cast<std::size_t>(y) * w + x] = label;
            queue.emplace_back(x, y);
            while (!queue.empty()) {
                const auto [cx, cy] = queue.front();
                queue.pop_front();
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dx == 0 && dy == 0) continue;
                        if (connectivity == 4 && dx != 0 && dy != 0) continue;
                        const int nx = cx + dx;
                        const int ny = cy + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                        auto& slot = out.labels[static_cast<std::size_t>(ny) * w + nx];
                        if (!m(nx, ny) || slot != 0) continue;
                        slot = label;
                        queue.emplace_back(nx, ny);
                    }
                }
            }
        }
    }
    return out;
}

BinaryMask threshold_mask(const ScalarField& f, double threshold) {
    BinaryMask out(f.width(), f.height());
    for (std::size_t i = 0; i < f.size(); ++i) out.set(i, f[i] >= threshold);
    return out;
}

BinaryMask boundary_mask(const ScalarField& g, double threshold, int width_px) {
    if (!g.all_finite()) fail(ErrorCode::NonFiniteValue, "boundary_mask input is not finite");
    if (width_px < 0) fail(ErrorCode::InvalidArgument, "boundary width must be non-negative");
    if (!(threshold > 0.0)) fail(ErrorCode::InvalidArgument, "boundary threshold must be positive");
    if (!(g.max() > threshold)) fail(ErrorCode::EmptyRegion, "no pixel exceeds the boundary threshold");

    const int w = g.width();
    const int h = g.height();
    const BinaryMask region = threshold_mask(g, threshold);
    BinaryMask edge(w, h);
    constexpr int nbr[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!region(x, y)) continue;
            for (const auto& o : nbr) {
                const int nx = x + o[0];
                const int ny = y + o[1];
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                if (!region(nx, ny)) {
                    edge.set(x, y, true);
                    break;
                }
            }
        }
    }
    const ScalarField dist = distance_to(edge);
    BinaryMask out(w, h);
    if (edge.count() == 0) return out;
    for (std::size_t i = 0; i < out.size(); ++i) out.set(i, dist[i] <= static_cast<double>(width_px));
    return out;
}

// ---------------------------------------------------------------------------
// AFG1 text format

std::string format_real(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string format_field(const ScalarField& f) {
    std::string out = "AFG1\n" + std::to_string(f.width()) + " " + std::to_string(f.height()) + "\n";
    for (int y = 0; y < f.height(); ++y) {
        for (int x = 0; x < f.width(); ++x) {
            if (x > 0) out += ' ';
            out += format_real(f(x, y));
        }
        out += '\n';
    }
    return out;
}

namespace {

bool parse_int(std::string_view tok, int& out) {
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
    return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

std::string_view next_line(std::string_view& text) {
    const auto pos = text.find('\n');
    std::string_view line = text.substr(0, pos);
    text = pos == std::string_view::npos ? std::string_view{} : text.substr(pos + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
}

std::vector<std::string_view> split_ws(std::string_view text) {
    std::vector<std::string_view> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        const std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) tokens.push_back(text.substr(start, i - start));
    }
    return tokens;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void dump(const std::string& text, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
    out << text;
    if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace

ScalarField parse_field(std::string_view text) {
    if (next_line(text) != "AFG1") fail(ErrorCode::MalformedHeader, "missing AFG1 magic");
    const auto dims = split_ws(next_line(text));
    int w = 0;
    int h = 0;
    if (dims.size() != 2 || !parse_int(dims[0], w) || !parse_int(dims[1], h) || w <= 0 || h <= 0) {
        fail(ErrorCode::MalformedHeader, "expected '<width> <height>' on line 2");
    }
    const auto tokens = split_ws(text);
    if (tokens.size() != static_cast<std::size_t>(w) * h) {
        fail(ErrorCode::DimensionMismatch, "header claims " + std::to_string(w) + "x" + std::to_string(h) +
                                                " but found " + std::to_string(tokens.size()) + " values");
    }
    std::vector<double> data(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto tok = tokens[i];
        const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), data[i]);
        if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
            fail(ErrorCode::MalformedValue, "cannot parse value '" + std::string(tok) + "'");
        }
        if (!std::isfinite(data[i])) fail(ErrorCode::NonFiniteValue, "non-finite value '" + std::string(tok) + "'");
    }
    return ScalarField(w, h, std::move(data));
}

ScalarField read_field(const std::filesystem::path& path) { return parse_field(slurp(path)); }

void write_field(const ScalarField& f, const std::filesystem::path& path) { dump(format_field(f), path); }

BinaryMask read_mask(const std::filesystem::path& path) {
    const ScalarField f = read_field(path);
    std::vector<std::uint8_t> data(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (f[i] != 0.0 && f[i] != 1.0) fail(ErrorCode::MalformedValue, "mask values must be 0 or 1");
        data[i] = f[i] == 1.0 ? 1 : 0;
    }
    return BinaryMask(f.width(), f.height(), std::move(data));
}

void write_mask(const BinaryMask& m, const std::filesystem::path& path) { write_field(m.to_field(), path); }

}  // namespace affordkit
