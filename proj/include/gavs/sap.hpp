#pragma once


#include "gavs/config.hpp"
#include "gavs/encoders.hpp"

namespace gavs {

// Prompt-token slot layout: one IoU slot, four query slots, one prompt slot.
inline constexpr std::size_t kPromptSlots = 6;
inline constexpr std::size_t kIouSlot = 0;
inline constexpr std::size_t kMaskQuerySlot = 1;
inline constexpr std::size_t kPromptSlot = 5;

// F_P as [B, 6, d_V].
struct PromptTokens {
    Tensor tokens;
};

// Semantic-aware audio prompt: visual cues, learnable noise and the audio
// feature concatenated in that order, projected into the six prompt slots.
class SemanticAudioPrompt {
public:
    SemanticAudioPrompt() = default;
    SemanticAudioPrompt(const EncoderConfig& enc, const SapConfig& cfg, std::size_t d_n,
                        ParameterStore& store);

    // F_C = MLP(GAP(F_V)): [B, d_V, H, W] -> [B, d_m].
    Tensor build_visual_cues(const VisualFeature& visual) const;

    // [F_C ; F_N ; F_A] when enabled, F_A alone otherwise. F_C and F_A are [B, d];
    // F_N is shared across the batch.
    Tensor assemble(const Tensor& cues, const Tensor& audio) const;

    PromptTokens project_prompt(const Tensor& prompt) const;

    bool enabled() const { return enabled_; }
    std::size_t prompt_dim() const;
    const Tensor& noise() const { return noise_; }
    const Linear& projection() const { return proj_; }
    const Mlp& cue_mlp() const { return cue_mlp_; }

private:
    bool enabled_ = true;
    std::size_t d_v_ = 0;
    std::size_t d_m_ = 0;
    std::size_t d_n_ = 0;
    Mlp cue_mlp_;
    Tensor noise_;
    Linear proj_;
};

// Cue, noise and audio concatenation with explicit segment checks. Accepts rank-1 segments
// (one prompt) or [B, d] segments; `noise` may be rank 1 and is shared across B.
Tensor assemble_sap(const Tensor& cues, const Tensor& noise, const Tensor& audio,
                    std::size_t d_m, std::size_t d_n);

}  // namespace gavs
