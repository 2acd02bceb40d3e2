#pragma once

// Brute-force reference implementations used by the unit and acceptance
// tests. They work on coordinate sets and explicit loops and share no code
// with the library.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "gavs/metrics.hpp"

namespace gavs::oracle {

using PixelSet = std::set<std::pair<std::size_t, std::size_t>>;  // (x, y)

inline PixelSet pixels_of(const BinaryMask& m) {
    PixelSet s;
    for (std::size_t y = 0; y < m.height; ++y)
        for (std::size_t x = 0; x < m.width; ++x)
            if (m.pixels[y * m.width + x] != 0) s.insert({x, y});
    return s;
}

inline PixelSet box_pixels(const BBox& b) {
    PixelSet s;
    for (std::size_t y = b.y_min; y <= b.y_max; ++y)
        for (std::size_t x = b.x_min; x <= b.x_max; ++x) s.insert({x, y});
    return s;
}

inline double set_iou(const PixelSet& a, const PixelSet& b) {
    std::size_t inter = 0;
    for (const auto& p : a) inter += b.count(p);
    const std::size_t uni = a.size() + b.size() - inter;
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

inline double miou(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt) {
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) total += set_iou(pixels_of(pred[i]), pixels_of(gt[i]));
    return total / static_cast<double>(pred.size());
}

inline double fscore(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt,
                     double beta2) {
    std::size_t tp = 0, np = 0, ng = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const PixelSet p = pixels_of(pred[i]);
        const PixelSet g = pixels_of(gt[i]);
        for (const auto& px : p) tp += g.count(px);
        np += p.size();
        ng += g.size();
    }
    const double precision = np == 0 ? 0.0 : static_cast<double>(tp) / np;
    const double recall = ng == 0 ? 0.0 : static_cast<double>(tp) / ng;
    if (beta2 * precision + recall == 0.0) return 0.0;
    return (1.0 + beta2) * precision * recall / (beta2 * precision + recall);
}

inline std::optional<BBox> bbox(const BinaryMask& m) {
    const PixelSet s = pixels_of(m);
    if (s.empty()) return std::nullopt;
    BBox b{m.width, m.height, 0, 0};
    for (const auto& [x, y] : s) {
        if (x < b.x_min) b.x_min = x;
        if (y < b.y_min) b.y_min = y;
        if (x > b.x_max) b.x_max = x;
        if (y > b.y_max) b.y_max = y;
    }
    return b;
}

struct Localization {
    double ciou = 0;
    double auc = 0;
};

inline Localization ciou_auc(const std::vector<ProbabilityMap>& maps, const std::vector<BBox>& boxes,
                             double map_threshold) {
    std::vector<double> ious;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        PixelSet region;
        for (std::size_t y = 0; y < maps[i].height; ++y)
            for (std::size_t x = 0; x < maps[i].width; ++x)
                if (maps[i].values[y * maps[i].width + x] > map_threshold) region.insert({x, y});
        ious.push_back(set_iou(region, box_pixels(boxes[i])));
    }
    Localization out;
    if (ious.empty()) return out;
    const double n = static_cast<double>(ious.size());
    std::size_t hits = 0;
    for (double v : ious) hits += v > 0.5;
    out.ciou = hits / n;
    double area = 0.0;
    for (int k = 1; k <= 19; ++k) {
        std::size_t above = 0;
        for (double v : ious) above += v >= k / 20.0;
        area += above / n;
    }
    out.auc = area / 19.0;
    return out;
}

// Random 8x8 mask with roughly `density` of its pixels set.
inline BinaryMask random_mask(std::mt19937_64& rng, std::size_t h = 8, std::size_t w = 8) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double density = u(rng);
    BinaryMask m{h, w, std::vector<std::uint8_t>(h * w)};
    for (auto& p : m.pixels) p = u(rng) < density ? 1 : 0;
    return m;
}

inline ProbabilityMap random_map(std::mt19937_64& rng, std::size_t h = 8, std::size_t w = 8) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ProbabilityMap m{h, w, std::vector<double>(h * w)};
    for (double& v : m.values) v = u(rng);
    return m;
}

inline BBox random_box(std::mt19937_64& rng, std::size_t h = 8, std::size_t w = 8) {
    std::uniform_int_distribution<std::size_t> ux(0, w - 1), uy(0, h - 1);
    std::size_t x0 = ux(rng), x1 = ux(rng), y0 = uy(rng), y1 = uy(rng);
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    return {x0, y0, x1, y1};
}

// -[y ln p + (1-y) ln(1-p)] per pixel, averaged.
inline double bce(const std::vector<double>& logits, const std::vector<double>& target) {
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-logits[i]));
        total += -(target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p));
    }
    return total / static_cast<double>(logits.size());
}

// Hardest-negative triplet loss by explicit double loop over pairs.
inline double triplet(const std::vector<std::vector<double>>& v, const std::vector<std::vector<double>>& a,
                      double margin) {
    auto cosine = [](const std::vector<double>& x, const std::vector<double>& y) {
        double xy = 0, xx = 0, yy = 0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            xy += x[k] * y[k];
            xx += x[k] * x[k];
            yy += y[k] * y[k];
        }
        return xy / (std::sqrt(xx) * std::sqrt(yy));
    };
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        double hardest = -2.0;
        for (std::size_t j = 0; j < a.size(); ++j) {
            if (j != i) hardest = std::max(hardest, cosine(v[i], a[j]));
        }
        total += std::max(0.0, margin - cosine(v[i], a[i]) + hardest);
    }
    return total / static_cast<double>(v.size());
}

}  // namespace gavs::oracle
