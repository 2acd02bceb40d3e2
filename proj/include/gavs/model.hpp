#pragma once

#include <optional>

#include "gavs/config.hpp"
#include "gavs/decoder.hpp"
#include "gavs/encoders.hpp"
#include "gavs/sap.hpp"

namespace gavs {

struct ModelOutputs {
    VisualFeature visual;  // encoder output before any audio fusion
    Tensor audio;          // F_A [B, d_m]
    Tensor cues;           // F_C [B, d_m]; undefined unless SAP is active
    Tensor sap;            // F_A' [B, prompt_dim]; undefined in AVFusion mode
    PromptTokens prompt;
    DecoderOutput decoder;

    const MaskPrediction& mask() const { return decoder.mask; }
};

// Full encoder-prompt-decoder pipeline plus the foundation-pretraining heads
// (`pretrain.*`), which only the pretraining stage uses.
class GavsModel {
public:
    GavsModel(const RunConfig& cfg, std::size_t audio_dim);

    // frames [B,3,S,S]; audio [B,d_in].
    ModelOutputs forward(const Tensor& frames, const Tensor& audio) const;
    // Same as forward() but starts from VisualEncoder::prefix() output.
    ModelOutputs forward_from_prefix(const Tensor& prefix_hidden, const Tensor& audio) const;
    ModelOutputs forward_from_visual(const VisualFeature& visual, const Tensor& audio) const;

    // Trainable flags for AVS training: frozen backbone, strategy-selected
    // decoder parameters, prompt side trainable, then `train.freeze` prefixes.
    void apply_tuning();
    void set_strategy(TuningStrategy strategy);

    // No trainable parameter feeds VisualEncoder::prefix().
    bool prefix_frozen() const;

    // Prompt tokens for point-prompted segmentation: learned base tokens with
    // a Fourier point embedding added to the prompt slot. points [B,2] in [0,1].
    Tensor point_prompt_tokens(const std::vector<double>& points_xy, std::size_t batch) const;
    // Per-patch class logits [B, HW, C+1] for backbone pretraining.
    Tensor patch_class_logits(const Tensor& frames) const;
    // Seed prompt-side parameters from the pretrained base tokens.
    void adopt_foundation_tokens();

    ParameterStore& params() { return store_; }
    const ParameterStore& params() const { return store_; }
    const RunConfig& config() const { return cfg_; }
    const VisualEncoder& visual_encoder() const { return visual_; }
    const AudioEncoder& audio_encoder() const { return audio_; }
    const SemanticAudioPrompt& prompt_builder() const { return sap_; }
    AudioSourceDecoder& decoder() { return decoder_; }
    const AudioSourceDecoder& decoder() const { return decoder_; }
    std::size_t audio_dim() const { return audio_dim_; }

private:
    RunConfig cfg_;
    std::size_t audio_dim_;
    ParameterStore store_;
    VisualEncoder visual_;
    AudioEncoder audio_;
    SemanticAudioPrompt sap_;
    AudioSourceDecoder decoder_;
    // AVFusion baseline
    Linear fusion_audio_;
    Tensor fusion_tokens_;
    // foundation pretraining heads
    Tensor base_tokens_;
    Linear point_embed_;
    Linear patch_head_;
};

// Fourier features of normalized points: sin/cos at frequencies 1,2,4,8 per axis.
inline constexpr std::size_t kPointFeatureDim = 16;
std::vector<double> point_features(double x, double y);

}  // namespace gavs
