#include "gavs/sap.hpp"

namespace gavs {

namespace {

void expect_segment(const Tensor& t, std::size_t dim, const char* name) {
    if (t.size(-1) != dim) {
        throw ShapeError(std::string("SAP segment ") + name + " has shape " + shape_str(t.shape()) +
                         ", expected last dim " + std::to_string(dim));
    }
}

}  // namespace

Tensor assemble_sap(const Tensor& cues, const Tensor& noise, const Tensor& audio,
                    std::size_t d_m, std::size_t d_n) {
    expect_segment(cues, d_m, "F_C");
    expect_segment(noise, d_n, "F_N");
    expect_segment(audio, d_m, "F_A");
    if (cues.dim() == 1 && audio.dim() == 1) return concat({cues, noise, audio}, 0);
    if (cues.dim() != 2 || audio.dim() != 2 || cues.size(0) != audio.size(0)) {
        throw ShapeError("SAP segments F_C " + shape_str(cues.shape()) + " and F_A " +
                         shape_str(audio.shape()) + " disagree on batch");
    }
    const std::size_t batch = cues.size(0);
    Tensor shared = noise.dim() == 1 ? add(Tensor::zeros({batch, d_n}), noise) : noise;
    return concat({cues, shared, audio}, 1);
}

SemanticAudioPrompt::SemanticAudioPrompt(const EncoderConfig& enc, const SapConfig& cfg,
                                         std::size_t d_n, ParameterStore& store)
    : enabled_(cfg.enabled), d_v_(enc.d_v), d_m_(enc.d_m), d_n_(d_n) {
    if (enabled_) {
        cue_mlp_ = Mlp::create(store, "sap.cue", enc.d_v, cfg.cue_hidden, enc.d_m,
                               Activation::Gelu);
        if (cfg.noise_init == "zero") {
            noise_ = store.zeros("sap.noise", {d_n});
        } else {
            noise_ = store.uniform_range("sap.noise", {d_n}, 0.02);
        }
    }
    proj_ = Linear::create(store, "sap.proj", prompt_dim(), kPromptSlots * enc.d_v);
}

std::size_t SemanticAudioPrompt::prompt_dim() const {
    return enabled_ ? 2 * d_m_ + d_n_ : d_m_;
}

Tensor SemanticAudioPrompt::build_visual_cues(const VisualFeature& visual) const {
    if (!enabled_) throw ContractError("visual cues requested with SAP disabled");
    return cue_mlp_(global_average_pool(visual));
}

Tensor SemanticAudioPrompt::assemble(const Tensor& cues, const Tensor& audio) const {
    if (!enabled_) {
        expect_segment(audio, d_m_, "F_A");
        return audio;
    }
    return assemble_sap(cues, noise_, audio, d_m_, d_n_);
}

PromptTokens SemanticAudioPrompt::project_prompt(const Tensor& prompt) const {
    if (prompt.size(-1) != prompt_dim()) {
        throw ShapeError("prompt of shape " + shape_str(prompt.shape()) + " does not match " +
                         "projection input " + std::to_string(prompt_dim()));
    }
    Tensor flat = proj_(prompt);
    if (prompt.dim() == 1) return {reshape(flat, {kPromptSlots, d_v_})};
    return {reshape(flat, {prompt.size(0), kPromptSlots, d_v_})};
}

}  // namespace gavs
