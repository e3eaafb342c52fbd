#pragma once

// Training-time augmentation: horizontal flips and random rotations.
// Rotation is nearest-neighbor with edge-replicate fill; a positive angle
// turns the image content counterclockwise (row 0 at the top).

#include <algorithm>
#include <cmath>

#include "occamnas/errors.hpp"
#include "occamnas/rng.hpp"
#include "occamnas/tensor.hpp"

namespace occamnas {

struct AugmentConfig {
    bool hflip = true;
    double rotation_degrees = 15.0;
};

template <class Real>
Tensor<Real> hflip(const Tensor<Real>& img) {
    if (img.rank != 3)
        throw ShapeMismatch("hflip expects an (h, w, ch) image");
    const int h = img.shape[0], w = img.shape[1], ch = img.shape[2];
    Tensor<Real> out{h, w, ch};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c)
                out(y, x, c) = img(y, w - 1 - x, c);
    return out;
}

template <class Real>
Tensor<Real> rotate(const Tensor<Real>& img, double degrees) {
    if (img.rank != 3)
        throw ShapeMismatch("rotate expects an (h, w, ch) image");
    if (degrees == 0.0)
        return img;
    const int h = img.shape[0], w = img.shape[1], ch = img.shape[2];
    const double rad = degrees * 3.14159265358979323846 / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    Tensor<Real> out{h, w, ch};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            // inverse map: sample the source pixel that lands on (y, x)
            const double dy = y - cy, dx = x - cx;
            const int sy = std::clamp(static_cast<int>(std::lround(cy + dy * cs - dx * sn)), 0,
                                      h - 1);
            const int sx = std::clamp(static_cast<int>(std::lround(cx + dy * sn + dx * cs)), 0,
                                      w - 1);
            for (int c = 0; c < ch; ++c)
                out(y, x, c) = img(sy, sx, c);
        }
    }
    return out;
}

// Flip with probability 1/2 (when enabled), then rotate by an angle drawn
// uniformly from +-rotation_degrees. Output shape equals input shape.
template <class Real>
Tensor<Real> augment(const Tensor<Real>& img, Rng& rng, const AugmentConfig& cfg) {
    const bool flip = cfg.hflip && rng.bernoulli(0.5);
    const double angle =
        cfg.rotation_degrees > 0 ? rng.uniform(-cfg.rotation_degrees, cfg.rotation_degrees) : 0.0;
    if (flip) {
        Tensor<Real> flipped = hflip(img);
        return angle == 0.0 ? flipped : rotate(flipped, angle);
    }
    return rotate(img, angle);
}

} // namespace occamnas
