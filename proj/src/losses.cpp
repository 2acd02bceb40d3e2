#include "gavs/losses.hpp"

#include <iostream>

namespace gavs {

Tensor seg_loss(const Tensor& logits, const Tensor& gt_mask) {
    if (logits.shape() != gt_mask.shape()) {
        throw ShapeError("seg_loss: logits " + shape_str(logits.shape()) + " vs mask " +
                         shape_str(gt_mask.shape()));
    }
    return bce_with_logits(logits, gt_mask);
}

ClipFeatures average_features(const Tensor& visual, const Tensor& audio) {
    if (visual.dim() != 3 || audio.dim() != 3 || visual.size(0) != audio.size(0) ||
        visual.size(1) != audio.size(1) || visual.size(1) == 0) {
        throw ShapeError("average_features expects [N,T,d] pairs, got " +
                         shape_str(visual.shape()) + " and " + shape_str(audio.shape()));
    }
    return {mean_over(visual, 1), mean_over(audio, 1)};
}

namespace {

// Adds -4 on the diagonal so a row max never picks the matched pair
// (cosine similarities live in [-1, 1]).
Tensor self_exclusion(std::size_t n) {
    Tensor m = Tensor::zeros({n, n});
    auto d = m.mutable_data();
    for (std::size_t i = 0; i < n; ++i) d[i * n + i] = -4.0;
    return m;
}

Tensor hinge(const Tensor& positive, const Tensor& negative, double margin) {
    return relu(add_scalar(sub(negative, positive), margin));
}

}  // namespace

Tensor semantic_loss_terms(const Tensor& v, const Tensor& a, double margin, bool symmetric) {
    if (v.dim() != 2 || a.dim() != 2 || v.size(0) != a.size(0) || v.size(1) != a.size(1)) {
        throw ShapeError("semantic_loss expects matching [N,d] embeddings, got " +
                         shape_str(v.shape()) + " and " + shape_str(a.shape()));
    }
    const std::size_t n = v.size(0);
    if (n < 2) {
        std::cerr << "warning: semantic loss needs a batch of at least 2, returning 0\n";
        return Tensor::zeros({1});
    }
    Tensor sim = matmul(l2_normalize(v), transpose(l2_normalize(a)));  // [N, N]
    Tensor positive = diagonal(sim);
    Tensor masked = add(sim, self_exclusion(n));
    Tensor terms = hinge(positive, max_over(masked, 1), margin);
    if (symmetric) terms = concat({terms, hinge(positive, max_over(masked, 0), margin)}, 0);
    return terms;
}

Tensor semantic_loss(const Tensor& v, const Tensor& a, double margin, bool symmetric) {
    return mean(semantic_loss_terms(v, a, margin, symmetric));
}

Tensor total_loss(const Tensor& seg, const Tensor& sem, double lambda) {
    if (lambda < 0) throw ContractError("loss weight must be non-negative");
    if (!sem.defined()) return seg;
    return add(seg, scale(sem, lambda));
}

}  // namespace gavs
