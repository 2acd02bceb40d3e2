#pragma once

#include <vector>

#include "gavs/config.hpp"
#include "gavs/layers.hpp"

namespace gavs {

// F_V as a [B, d_V, H, W] field.
struct VisualFeature {
    Tensor field;
};

// F_As as [B, T, d_m] (or [T, d_m]); F_A for frame i is row i.
struct AudioFeature {
    Tensor clip;
};

// Pre-norm ViT block with an optional bottleneck adapter after the MLP sublayer.
struct EncoderBlock {
    LayerNorm ln_attn;
    MultiHeadAttention attn;
    LayerNorm ln_mlp;
    Mlp mlp;
    BottleneckAdapter adapter;
    bool has_adapter = false;

    Tensor body(const Tensor& h) const;  // both residual sublayers
    Tensor adapt(const Tensor& h) const { return has_adapter ? adapter(h) : h; }
};

// Patch-embedding transformer standing in for a large frozen image encoder.
class VisualEncoder {
public:
    VisualEncoder() = default;
    VisualEncoder(const EncoderConfig& cfg, ParameterStore& store);

    // frames: [B, 3, S, S] with values in [0, 1]. Frames are independent.
    VisualFeature encode_frames(const Tensor& frames) const;

    // encode_frames == resume(prefix(frames)). Everything in prefix() is
    // backbone, so its output can be cached while the backbone is frozen.
    Tensor prefix(const Tensor& frames) const;
    VisualFeature resume(const Tensor& hidden) const;

    // [B, HW, d_V] token form of the last hidden state (for pretraining heads).
    Tensor tokens(const Tensor& frames) const;

    const EncoderConfig& config() const { return cfg_; }

private:
    Tensor patchify(const Tensor& frames) const;
    Tensor resume_tokens(const Tensor& hidden) const;

    EncoderConfig cfg_;
    Linear patch_embed_;
    Tensor pos_;
    std::vector<EncoderBlock> blocks_;
    LayerNorm neck_;
};

// Two-layer per-frame MLP standing in for a pretrained audio embedding network.
class AudioEncoder {
public:
    AudioEncoder() = default;
    AudioEncoder(std::size_t d_in, std::size_t hidden, std::size_t d_m, ParameterStore& store);

    // audio: [..., T, d_in] -> [..., T, d_m]; rows are mapped independently.
    AudioFeature encode_audio(const Tensor& audio) const;
    // Frame-count contract check against the visual stream.
    AudioFeature encode_audio(const Tensor& audio, std::size_t expected_frames) const;

    std::size_t input_dim() const { return d_in_; }

private:
    std::size_t d_in_ = 0;
    Mlp mlp_;
};

// [B, d, H, W] -> [B, d] spatial mean.
Tensor global_average_pool(const VisualFeature& feature);

// [B, HW, d] tokens <-> [B, d, H, W] field.
Tensor tokens_to_field(const Tensor& tokens, std::size_t h, std::size_t w);
Tensor field_to_tokens(const Tensor& field);

}  // namespace gavs
