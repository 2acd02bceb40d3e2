#pragma once

#include "gavs/ops.hpp"

namespace gavs {

// Mean per-pixel binary cross-entropy from mask logits.
Tensor seg_loss(const Tensor& logits, const Tensor& gt_mask);

struct ClipFeatures {
    Tensor visual;  // v [N, d]
    Tensor audio;   // a [N, d_m]
};

// visual [N, T, d], audio [N, T, d_m] -> per-clip means over the T frames.
ClipFeatures average_features(const Tensor& visual, const Tensor& audio);

// Triplet loss with cosine similarity: visual anchors, matched audio as the
// positive, hardest in-batch audio (excluding self) as the negative.
// `symmetric` averages in the audio-anchored direction. N < 2 gives 0.
Tensor semantic_loss(const Tensor& v, const Tensor& a, double margin, bool symmetric = false);

// Per-triplet hinge values whose mean is semantic_loss (both directions
// concatenated when symmetric).
Tensor semantic_loss_terms(const Tensor& v, const Tensor& a, double margin, bool symmetric = false);

Tensor total_loss(const Tensor& seg, const Tensor& sem, double lambda);

}  // namespace gavs
