#pragma once

#include <algorithm>
#include <array>
#include <filesystem>

#include "strans/tensor.hpp"

// Procedural toy datasets for adversarial training, plus a directory-of-PNGs
// escape hatch. Every sample is a pure function of (kind, seed, index):
// batches are reproducible regardless of sampling order, and conditional
// labels are part of the sample, not an afterthought.
//
// SHAPES draws one filled shape per image on a dark background; the class
// decides both geometry and color (class 0: red-dominant circle, class 1:
// blue-dominant rectangle), so a mean-red-vs-mean-blue rule recovers the
// label without a classifier.

namespace strans {

enum class DatasetKind { Shapes, GaussTexture, ImageDir };

struct DatasetSpec {
    DatasetKind kind = DatasetKind::Shapes;
    index_t resolution = 32;
    index_t classes = 2;
    std::string path;  // ImageDir only
};

std::vector<std::uint8_t> read_png_rgb(const std::string& path, index_t& w,
                                       index_t& h);

template <class T>
struct Dataset {
    DatasetSpec spec;
    std::uint64_t seed = 0;
    std::vector<std::string> files;  // ImageDir

    index_t sample_label(index_t index) const {
        Rng rng(Rng::mix(seed ^ 0x5348u, static_cast<std::uint64_t>(index)));
        return static_cast<index_t>(rng.uniform() * spec.classes);
    }

    /// Writes one [res, res, 3] image in [-1, 1] and returns its label.
    index_t fill_sample(index_t index, T* out) const {
        const index_t R = spec.resolution;
        switch (spec.kind) {
            case DatasetKind::Shapes: {
                Rng rng(Rng::mix(seed ^ 0x5348u, static_cast<std::uint64_t>(index)));
                const index_t label =
                    static_cast<index_t>(rng.uniform() * spec.classes);
                const double bg = -0.85 + 0.1 * rng.uniform();
                const double cx = (0.3 + 0.4 * rng.uniform()) * R;
                const double cy = (0.3 + 0.4 * rng.uniform()) * R;
                const double ext = (0.15 + 0.15 * rng.uniform()) * R;
                // color rule: even classes red-dominant, odd blue-dominant
                const double hi = 0.7 + 0.2 * rng.uniform();
                std::array<double, 3> color{bg, bg, bg};
                color[label % 2 == 0 ? 0 : 2] = hi;
                color[1] = -0.4;
                const bool circle = label % 2 == 0;
                for (index_t i = 0; i < R; ++i)
                    for (index_t j = 0; j < R; ++j) {
                        const double dy = i + 0.5 - cy, dx = j + 0.5 - cx;
                        const bool inside =
                            circle ? dy * dy + dx * dx <= ext * ext
                                   : std::abs(dy) <= ext && std::abs(dx) <= 0.8 * ext;
                        T* px = out + (i * R + j) * 3;
                        for (int c = 0; c < 3; ++c)
                            px[c] = static_cast<T>(inside ? color[c] : bg);
                    }
                return label;
            }
            case DatasetKind::GaussTexture: {
                Rng rng(Rng::mix(seed ^ 0x4754u, static_cast<std::uint64_t>(index)));
                const index_t label =
                    static_cast<index_t>(rng.uniform() * spec.classes);
                // per-class base color and correlation length
                std::array<double, 3> base{-0.2, -0.2, -0.2};
                base[label % 3] = 0.4;
                const index_t radius = 1 + label % 3;
                std::vector<double> noise(R * R);
                for (double& v : noise) v = rng.normal();
                // two separable box-blur passes give a smooth stationary field
                std::vector<double> tmp(R * R);
                for (int pass = 0; pass < 2; ++pass) {
                    for (index_t i = 0; i < R; ++i)
                        for (index_t j = 0; j < R; ++j) {
                            double s = 0;
                            for (index_t k = -radius; k <= radius; ++k) {
                                index_t jj = std::clamp<index_t>(j + k, 0, R - 1);
                                s += noise[i * R + jj];
                            }
                            tmp[i * R + j] = s / (2 * radius + 1);
                        }
                    for (index_t i = 0; i < R; ++i)
                        for (index_t j = 0; j < R; ++j) {
                            double s = 0;
                            for (index_t k = -radius; k <= radius; ++k) {
                                index_t ii = std::clamp<index_t>(i + k, 0, R - 1);
                                s += tmp[ii * R + j];
                            }
                            noise[i * R + j] = s / (2 * radius + 1);
                        }
                }
                for (index_t p = 0; p < R * R; ++p)
                    for (int c = 0; c < 3; ++c)
                        out[p * 3 + c] = static_cast<T>(std::clamp(
                            base[c] + 0.8 * noise[p], -1.0, 1.0));
                return label;
            }
            case DatasetKind::ImageDir: {
                ST_CHECK(!files.empty(), "image directory holds no PNG files");
                const std::string& f = files[index % files.size()];
                index_t w = 0, h = 0;
                std::vector<std::uint8_t> px = read_png_rgb(f, w, h);
                ST_CHECK(w == R && h == R, "image " << f << " is " << w << "x" << h
                                           << ", dataset expects " << R << "x" << R);
                for (index_t p = 0; p < R * R * 3; ++p)
                    out[p] = static_cast<T>(px[p] / 127.5 - 1.0);
                return 0;
            }
        }
        return 0;
    }

    /// Stacks samples at the given indices into [B, res, res, 3]; labels, if
    /// requested, come out aligned.
    Tensor<T> batch(const std::vector<index_t>& indices,
                    std::vector<index_t>* labels = nullptr) const {
        const index_t B = static_cast<index_t>(indices.size());
        const index_t R = spec.resolution;
        Tensor<T> out(Shape{B, R, R, 3});
        if (labels) labels->resize(B);
        for (index_t b = 0; b < B; ++b) {
            const index_t y = fill_sample(indices[b], out.raw().data() + b * R * R * 3);
            if (labels) (*labels)[b] = y;
        }
        return out;
    }
};

template <class T>
Dataset<T> open_dataset(DatasetSpec spec, std::uint64_t seed) {
    ST_CHECK(spec.resolution >= 8, "dataset resolution too small");
    ST_CHECK(spec.classes >= 1, "dataset needs at least one class");
    Dataset<T> d;
    d.spec = std::move(spec);
    d.seed = seed;
    if (d.spec.kind == DatasetKind::ImageDir) {
        ST_CHECK(std::filesystem::is_directory(d.spec.path),
                 "not a directory: " << d.spec.path);
        for (const auto& e : std::filesystem::directory_iterator(d.spec.path))
            if (e.path().extension() == ".png") d.files.push_back(e.path().string());
        std::sort(d.files.begin(), d.files.end());
        ST_CHECK(!d.files.empty(), "no .png files in " << d.spec.path);
    }
    return d;
}

/// Per-channel mean and standard deviation over a [B, R, R, 3] batch.
template <class T>
std::pair<std::array<double, 3>, std::array<double, 3>> channel_statistics(
    const Tensor<T>& imgs) {
    ST_CHECK(imgs.ndim() == 4 && imgs.dim(3) == 3, "expected [B,R,R,3]");
    const index_t n = imgs.numel() / 3;
    std::array<double, 3> mean{}, sd{};
    for (index_t i = 0; i < imgs.numel(); i += 3)
        for (int c = 0; c < 3; ++c) mean[c] += imgs.values()[i + c];
    for (int c = 0; c < 3; ++c) mean[c] /= static_cast<double>(n);
    for (index_t i = 0; i < imgs.numel(); i += 3)
        for (int c = 0; c < 3; ++c) {
            const double d = imgs.values()[i + c] - mean[c];
            sd[c] += d * d;
        }
    for (int c = 0; c < 3; ++c) sd[c] = std::sqrt(sd[c] / static_cast<double>(n));
    return {mean, sd};
}

/// Color rule behind the SHAPES classes: red-dominant images are class 0,
/// blue-dominant class 1. Works on one [R, R, 3] image.
template <class T>
index_t shapes_color_class(const T* img, index_t numel) {
    double r = 0, b = 0;
    for (index_t i = 0; i < numel; i += 3) {
        r += img[i];
        b += img[i + 2];
    }
    return r >= b ? 0 : 1;
}

}  // namespace strans
