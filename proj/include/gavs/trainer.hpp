#pragma once

#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "gavs/dataset.hpp"
#include "gavs/model.hpp"
#include "gavs/optimizer.hpp"

namespace gavs {

struct LossRecord {
    std::string phase;  // "backbone", "decoder" or "avs"
    std::size_t step = 0;
    double total = 0;
    double seg = 0;
    double sem = 0;
};

// One scene batch. `visual_prefix` holds cached VisualEncoder::prefix()
// output; when undefined the frames go through the whole encoder.
struct Batch {
    Tensor frames;         // [B,3,S,S]
    Tensor visual_prefix;  // [B,HW,d] or undefined
    Tensor audio;          // [B,d_in]
    Tensor masks;          // [B,M,M]
};

struct LossTerms {
    Tensor total;
    Tensor seg;
    Tensor sem;  // undefined when the semantic term does not apply
};

// Segmentation plus weighted semantic loss for a batch. The semantic term uses the visual cues and audio
// features, so it only exists in AudioPrompt mode with SAP enabled.
LossTerms compute_loss(const GavsModel& model, const Batch& batch);

// The same loss as a flat vector of weighted per-pixel and per-triplet terms
// whose sum is compute_loss(...).total.
Tensor loss_summands(const GavsModel& model, const Batch& batch);

// Forward, backward and one optimizer update restricted to the trainable set.
// Throws NumericError naming the offending tensors on a non-finite loss or gradient.
LossRecord train_step(GavsModel& model, const Batch& batch, Adam& opt);

// Caches the frozen encoder prefix per scene.
class FeatureCache {
public:
    FeatureCache(const GavsModel& model, const Dataset& ds, const std::vector<std::size_t>& idx);
    bool contains(std::size_t scene) const { return rows_.count(scene) != 0; }
    Tensor gather(const std::vector<std::size_t>& idx) const;

private:
    Shape row_shape_;
    std::map<std::size_t, std::vector<double>> rows_;
};

Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& idx, const FeatureCache* cache);

using LossCallback = std::function<void(const LossRecord&)>;

// Backbone pretraining (per-patch classification) followed by point-prompted
// class-agnostic decoder pretraining on a corpus separate from the task data.
// Leaves the model with task trainable flags restored.
void pretrain_foundation(GavsModel& model, const LossCallback& on_step = {});

// Named values of the foundation parameters (visual backbone, decoder and
// pretraining heads), so several task runs can share one pretraining.
using ParameterSnapshot = std::map<std::string, std::vector<double>>;
ParameterSnapshot snapshot_foundation(const GavsModel& model);
void load_foundation(GavsModel& model, const ParameterSnapshot& snap);

// Task training over `train_idx`; batches are drawn with replacement from a
// stream seeded by train.seed.
std::vector<LossRecord> train_gavs(GavsModel& model, const Dataset& ds,
                                   const std::vector<std::size_t>& train_idx,
                                   const LossCallback& on_step = {});

void write_loss_csv(std::ostream& out, const std::vector<LossRecord>& records);

}  // namespace gavs
