#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace gavs {

// Row-major binary mask, values 0/1.
struct BinaryMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;

    std::size_t count() const;
};

struct ProbabilityMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;  // in [0, 1]

    BinaryMask binarize(double threshold) const;  // strictly above threshold
};

// Inclusive pixel box.
struct BBox {
    std::size_t x_min = 0, y_min = 0, x_max = 0, y_max = 0;

    bool operator==(const BBox&) const = default;
};

// Intersection over union; two empty masks count as 1.
double mask_iou(const BinaryMask& pred, const BinaryMask& gt);
double miou(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt);

// F-beta from precision and recall aggregated over all pixels of all samples.
double fscore(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt,
              double beta2 = 0.3);
double fscore_from(double precision, double recall, double beta2);

std::optional<BBox> mask_to_bbox(const BinaryMask& mask);

// Filled box region rasterized onto a height x width grid.
BinaryMask bbox_region(const BBox& box, std::size_t height, std::size_t width);

struct LocalizationScore {
    double ciou = 0;             // fraction of samples with IoU > 0.5
    double auc = 0;              // mean success over t = 0.05, 0.10, ..., 0.95
    std::vector<double> ious;    // per sample
    std::vector<double> success; // success(t) per threshold
};

inline constexpr double kLocalizationIouThreshold = 0.5;

// Each map is binarized at `map_threshold` and compared with its box.
LocalizationScore ciou_auc(const std::vector<ProbabilityMap>& maps, const std::vector<BBox>& boxes,
                           double map_threshold = 0.5);
LocalizationScore localization_from_ious(std::vector<double> ious);

}  // namespace gavs
