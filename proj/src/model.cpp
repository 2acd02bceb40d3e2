#include "gavs/model.hpp"

#include <cmath>
#include <numbers>

namespace gavs {

std::vector<double> point_features(double x, double y) {
    std::vector<double> f;
    f.reserve(kPointFeatureDim);
    for (double freq : {1.0, 2.0, 4.0, 8.0}) {
        const double w = 2.0 * std::numbers::pi * freq;
        f.push_back(std::sin(w * x));
        f.push_back(std::cos(w * x));
        f.push_back(std::sin(w * y));
        f.push_back(std::cos(w * y));
    }
    return f;
}

GavsModel::GavsModel(const RunConfig& cfg, std::size_t audio_dim)
    : cfg_(cfg), audio_dim_(audio_dim), store_(cfg.train.seed) {
    cfg_.encoder.validate();
    const std::size_t d = cfg.encoder.d_v;
    visual_ = VisualEncoder(cfg.encoder, store_);
    audio_ = AudioEncoder(audio_dim, cfg.encoder.audio_hidden, cfg.encoder.d_m, store_);
    if (cfg.decoder.fusion == FusionMode::AudioPrompt) {
        sap_ = SemanticAudioPrompt(cfg.encoder, cfg.sap, cfg.d_n(), store_);
    } else {
        fusion_audio_ = Linear::create(store_, "fusion.audio", cfg.encoder.d_m, d);
        fusion_tokens_ = store_.uniform_range("fusion.tokens", {kPromptSlots, d}, 0.02);
    }
    decoder_ = AudioSourceDecoder(cfg.encoder, cfg.decoder, store_);
    base_tokens_ = store_.uniform_range("pretrain.tokens", {kPromptSlots, d}, 1.0);
    point_embed_ = Linear::create(store_, "pretrain.point", kPointFeatureDim, d);
    patch_head_ = Linear::create(store_, "pretrain.patch_head", d, cfg.data.num_classes + 1);
    apply_tuning();
}

void GavsModel::set_strategy(TuningStrategy strategy) {
    cfg_.decoder.strategy = strategy;
    decoder_.set_strategy(strategy);
    apply_tuning();
}

void GavsModel::apply_tuning() {
    const TuningStrategy strategy = cfg_.decoder.strategy;
    const bool adapters = cfg_.encoder.adapters_enabled;
    store_.set_trainable_if([](const std::string&) { return true; }, false);
    store_.set_trainable_if(
        [&](const std::string& n) {
            if (n.rfind("encoder.visual.", 0) == 0) {
                return adapters && n.find(".adapter.") != std::string::npos;
            }
            if (n.rfind("encoder.audio.", 0) == 0) return true;
            if (n.rfind("sap.", 0) == 0) return true;
            if (n.rfind("fusion.", 0) == 0) return true;
            if (is_decoder_param(n)) return decoder_param_trainable(n, strategy);
            return false;
        },
        true);
    for (const std::string& prefix : cfg_.train.freeze) {
        store_.set_trainable_if([&](const std::string& n) { return n.rfind(prefix, 0) == 0; },
                                false);
    }
}

bool GavsModel::prefix_frozen() const {
    for (const Parameter& p : store_.all()) {
        if (p.trainable && p.name.rfind("encoder.visual.", 0) == 0 &&
            p.name.find(".adapter.") == std::string::npos) {
            return false;
        }
    }
    return true;
}

ModelOutputs GavsModel::forward(const Tensor& frames, const Tensor& audio) const {
    return forward_from_visual(visual_.encode_frames(frames), audio);
}

ModelOutputs GavsModel::forward_from_prefix(const Tensor& prefix_hidden, const Tensor& audio) const {
    return forward_from_visual(visual_.resume(prefix_hidden), audio);
}

ModelOutputs GavsModel::forward_from_visual(const VisualFeature& visual, const Tensor& audio) const {
    const std::size_t b = visual.field.size(0);
    if (audio.dim() != 2 || audio.size(0) != b) {
        throw ContractError("audio batch " + shape_str(audio.shape()) + " does not match " +
                            std::to_string(b) + " frames");
    }
    ModelOutputs out;
    out.visual = visual;
    out.audio = audio_.encode_audio(audio).clip;

    VisualFeature decoder_visual = visual;
    if (cfg_.decoder.fusion == FusionMode::AudioPrompt) {
        if (sap_.enabled()) out.cues = sap_.build_visual_cues(visual);
        out.sap = sap_.assemble(out.cues, out.audio);
        out.prompt = sap_.project_prompt(out.sap);
    } else {
        const std::size_t d = cfg_.encoder.d_v;
        Tensor injected = reshape(fusion_audio_(out.audio), {b, d, 1, 1});
        decoder_visual = {add(visual.field, injected)};
        out.prompt = {add(Tensor::zeros({b, kPromptSlots, d}), fusion_tokens_)};
    }

    out.decoder = decoder_.forward(out.prompt, decoder_visual);
    if (cfg_.decoder.feedback_enabled) {
        VisualFeature refined = mask_embedding_feedback(out.decoder.mask_embedding, decoder_visual);
        out.decoder = decoder_.forward(out.prompt, refined);
    }
    return out;
}

Tensor GavsModel::point_prompt_tokens(const std::vector<double>& points_xy, std::size_t batch) const {
    if (points_xy.size() != 2 * batch) throw ContractError("point prompts need 2 coords per sample");
    const std::size_t d = cfg_.encoder.d_v;
    std::vector<double> feats;
    feats.reserve(batch * kPointFeatureDim);
    for (std::size_t i = 0; i < batch; ++i) {
        auto f = point_features(points_xy[2 * i], points_xy[2 * i + 1]);
        feats.insert(feats.end(), f.begin(), f.end());
    }
    Tensor emb = point_embed_(Tensor::from({batch, kPointFeatureDim}, std::move(feats)));
    // Place the point embedding in the prompt slot, zeros elsewhere.
    std::vector<Tensor> slots;
    for (std::size_t s = 0; s < kPromptSlots; ++s) {
        slots.push_back(s == kPromptSlot ? reshape(emb, {batch, 1, d})
                                         : Tensor::zeros({batch, 1, d}));
    }
    return add(concat(slots, 1), base_tokens_);
}

Tensor GavsModel::patch_class_logits(const Tensor& frames) const {
    return patch_head_(visual_.tokens(frames));
}

void GavsModel::adopt_foundation_tokens() {
    const auto base = base_tokens_.data();
    if (cfg_.decoder.fusion == FusionMode::AudioPrompt) {
        auto bias = store_.get("sap.proj.b").tensor.mutable_data();
        std::copy(base.begin(), base.end(), bias.begin());
    } else {
        auto tokens = fusion_tokens_.mutable_data();
        std::copy(base.begin(), base.end(), tokens.begin());
    }
}

}  // namespace gavs
