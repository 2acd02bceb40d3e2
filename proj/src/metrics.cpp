#include "gavs/metrics.hpp"

#include <algorithm>
#include <string>

#include "gavs/errors.hpp"

namespace gavs {

namespace {

void check_pair(const BinaryMask& a, const BinaryMask& b) {
    if (a.height != b.height || a.width != b.width || a.pixels.size() != b.pixels.size()) {
        throw ShapeError("mask shapes differ: " + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                         std::to_string(b.width));
    }
}

void check_lengths(std::size_t a, std::size_t b) {
    if (a != b) {
        throw ContractError("prediction/ground-truth counts differ: " + std::to_string(a) + " vs " +
                            std::to_string(b));
    }
}

}  // namespace

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count_if(pixels.begin(), pixels.end(),
                                                  [](std::uint8_t p) { return p != 0; }));
}

BinaryMask ProbabilityMap::binarize(double threshold) const {
    BinaryMask m{height, width, std::vector<std::uint8_t>(values.size())};
    for (std::size_t i = 0; i < values.size(); ++i) m.pixels[i] = values[i] > threshold ? 1 : 0;
    return m;
}

double mask_iou(const BinaryMask& pred, const BinaryMask& gt) {
    check_pair(pred, gt);
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.pixels.size(); ++i) {
        const bool p = pred.pixels[i] != 0;
        const bool g = gt.pixels[i] != 0;
        inter += p && g;
        uni += p || g;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double miou(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt) {
    check_lengths(pred.size(), gt.size());
    if (pred.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) total += mask_iou(pred[i], gt[i]);
    return total / static_cast<double>(pred.size());
}

double fscore_from(double precision, double recall, double beta2) {
    const double denom = beta2 * precision + recall;
    return denom == 0.0 ? 0.0 : (1.0 + beta2) * precision * recall / denom;
}

double fscore(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt, double beta2) {
    check_lengths(pred.size(), gt.size());
    std::size_t tp = 0, pred_pos = 0, gt_pos = 0;
    for (std::size_t s = 0; s < pred.size(); ++s) {
        check_pair(pred[s], gt[s]);
        for (std::size_t i = 0; i < pred[s].pixels.size(); ++i) {
            const bool p = pred[s].pixels[i] != 0;
            const bool g = gt[s].pixels[i] != 0;
            tp += p && g;
            pred_pos += p;
            gt_pos += g;
        }
    }
    const double precision = pred_pos == 0 ? 0.0 : static_cast<double>(tp) / pred_pos;
    const double recall = gt_pos == 0 ? 0.0 : static_cast<double>(tp) / gt_pos;
    return fscore_from(precision, recall, beta2);
}

std::optional<BBox> mask_to_bbox(const BinaryMask& mask) {
    std::optional<BBox> box;
    for (std::size_t y = 0; y < mask.height; ++y) {
        for (std::size_t x = 0; x < mask.width; ++x) {
            if (!mask.pixels[y * mask.width + x]) continue;
            if (!box) {
                box = BBox{x, y, x, y};
            } else {
                box->x_min = std::min(box->x_min, x);
                box->x_max = std::max(box->x_max, x);
                box->y_min = std::min(box->y_min, y);
                box->y_max = std::max(box->y_max, y);
            }
        }
    }
    return box;
}

BinaryMask bbox_region(const BBox& box, std::size_t height, std::size_t width) {
    BinaryMask m{height, width, std::vector<std::uint8_t>(height * width, 0)};
    for (std::size_t y = box.y_min; y <= box.y_max && y < height; ++y) {
        for (std::size_t x = box.x_min; x <= box.x_max && x < width; ++x) m.pixels[y * width + x] = 1;
    }
    return m;
}

LocalizationScore localization_from_ious(std::vector<double> ious) {
    LocalizationScore s;
    s.ious = std::move(ious);
    const double n = static_cast<double>(s.ious.size());
    if (s.ious.empty()) {
        s.success.assign(19, 0.0);
        return s;
    }
    s.ciou = std::count_if(s.ious.begin(), s.ious.end(),
                           [](double v) { return v > kLocalizationIouThreshold; }) / n;
    double area = 0.0;
    for (int k = 1; k <= 19; ++k) {
        const double t = k / 20.0;
        const double hit = std::count_if(s.ious.begin(), s.ious.end(), [&](double v) { return v >= t; }) / n;
        s.success.push_back(hit);
        area += hit;
    }
    s.auc = area / 19.0;
    return s;
}

LocalizationScore ciou_auc(const std::vector<ProbabilityMap>& maps, const std::vector<BBox>& boxes,
                           double map_threshold) {
    check_lengths(maps.size(), boxes.size());
    std::vector<double> ious;
    ious.reserve(maps.size());
    for (std::size_t i = 0; i < maps.size(); ++i) {
        BinaryMask pred = maps[i].binarize(map_threshold);
        ious.push_back(mask_iou(pred, bbox_region(boxes[i], maps[i].height, maps[i].width)));
    }
    return localization_from_ious(std::move(ious));
}

}  // namespace gavs
