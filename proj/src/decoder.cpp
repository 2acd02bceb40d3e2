#include "gavs/decoder.hpp"

namespace gavs {

Tensor cross_modal_attention(const MultiHeadAttention& attn, const Tensor& query_set,
                             const Tensor& kv_set) {
    return attn(query_set, kv_set, kv_set);
}

Tensor cola_forward(const BottleneckAdapter& cola, const Tensor& h) { return cola.delta(h); }

LayerOutput DecoderLayer::forward(const Tensor& tokens, const Tensor& visual,
                                  const Tensor& pos) const {
    LayerOutput out;
    LayerTrace& tr = out.trace;

    tr.tokens_after_self_attn = ln_self(add(tokens, self_attn(tokens, tokens, tokens)));
    const Tensor& t = tr.tokens_after_self_attn;

    // Tokens attend to the visual field.
    Tensor av = av_attn(t, add(visual, pos), visual);
    if (use_av_adapter) av = add(av, av_adapter.delta(av));
    tr.context = add(t, av);

    Tensor hidden = mlp(ln_context(tr.context));
    tr.prompt_update = use_cola ? add(cola_forward(cola, hidden), hidden) : hidden;
    tr.key = add(tr.context, tr.prompt_update);
    out.tokens = ln_key(tr.key);

    // The visual field attends back to the updated tokens.
    Tensor va = va_attn(add(visual, pos), out.tokens, out.tokens);
    if (use_va_adapter) va = add(va, va_adapter.delta(va));
    tr.visual_update = add(visual, va);
    out.visual = ln_visual(tr.visual_update);
    return out;
}

std::vector<double> MaskPrediction::binary(double threshold) const {
    Tensor p = probabilities();
    std::vector<double> out(p.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = p.data()[i] > threshold ? 1.0 : 0.0;
    return out;
}

AudioSourceDecoder::AudioSourceDecoder(const EncoderConfig& enc, const DecoderConfig& cfg,
                                       ParameterStore& store)
    : d_(enc.d_v), grid_(enc.grid()) {
    if (d_ % 8 != 0) {
        throw ConfigError("decoder needs d_V divisible by 8, got " + std::to_string(d_));
    }
    pos_ = store.uniform_range("decoder.pos", {grid_ * grid_, d_}, 0.02);
    for (std::size_t i = 0; i < cfg.n_layers; ++i) {
        const std::string p = "decoder.layer" + std::to_string(i);
        DecoderLayer l;
        l.self_attn = MultiHeadAttention::create(store, p + ".self_attn", d_, cfg.n_heads);
        l.ln_self = LayerNorm::create(store, p + ".ln_self", d_);
        l.av_attn = MultiHeadAttention::create(store, p + ".av_attn", d_, cfg.n_heads);
        l.av_adapter = BottleneckAdapter::create(store, p + ".av_adapter", d_, cfg.attn_adapter_rank);
        l.ln_context = LayerNorm::create(store, p + ".ln_context", d_);
        l.mlp = Mlp::create(store, p + ".mlp", d_, cfg.mlp_dim, d_, Activation::Gelu);
        l.cola = BottleneckAdapter::create(store, p + ".cola", d_, cfg.cola_rank);
        l.ln_key = LayerNorm::create(store, p + ".ln_key", d_);
        l.va_attn = MultiHeadAttention::create(store, p + ".va_attn", d_, cfg.n_heads);
        l.va_adapter = BottleneckAdapter::create(store, p + ".va_adapter", d_, cfg.attn_adapter_rank);
        l.ln_visual = LayerNorm::create(store, p + ".ln_visual", d_);
        layers_.push_back(std::move(l));
    }
    up1_kernel_ = store.uniform("decoder.upscale.conv1.k", {d_, d_ / 4, 2, 2}, d_);
    up1_bias_ = store.zeros("decoder.upscale.conv1.b", {d_ / 4});
    up2_kernel_ = store.uniform("decoder.upscale.conv2.k", {d_ / 4, d_ / 8, 2, 2}, d_ / 4);
    up2_bias_ = store.zeros("decoder.upscale.conv2.b", {d_ / 8});
    mask_mlp_ = Mlp::create(store, "decoder.mask_mlp", d_, d_, d_ / 8, Activation::Relu);
    set_strategy(cfg.strategy);
}

void AudioSourceDecoder::set_strategy(TuningStrategy strategy) {
    for (DecoderLayer& l : layers_) {
        l.use_cola = strategy == TuningStrategy::ColA || strategy == TuningStrategy::ColAPlusAVVA;
        l.use_av_adapter =
            strategy == TuningStrategy::AVAdapter || strategy == TuningStrategy::ColAPlusAVVA;
        l.use_va_adapter =
            strategy == TuningStrategy::VAAdapter || strategy == TuningStrategy::ColAPlusAVVA;
    }
}

Tensor AudioSourceDecoder::upscale_mask_embedding(const Tensor& mask_embedding) const {
    if (mask_embedding.size(-3) != d_) {
        throw ShapeError("mask embedding " + shape_str(mask_embedding.shape()) + " needs " +
                         std::to_string(d_) + " channels");
    }
    Tensor h = gelu(conv_transpose2d(mask_embedding, up1_kernel_, up1_bias_));
    return conv_transpose2d(h, up2_kernel_, up2_bias_);
}

MaskPrediction AudioSourceDecoder::predict_mask(const Tensor& upscaled, const Tensor& tokens) const {
    const std::size_t b = upscaled.size(0);
    const std::size_t c = upscaled.size(1);
    const std::size_t oh = upscaled.size(2);
    const std::size_t ow = upscaled.size(3);
    Tensor query = reshape(slice(tokens, 1, kMaskQuerySlot, 1), {b, d_});
    Tensor weights = reshape(mask_mlp_(query), {b, 1, c});
    Tensor logits = matmul(weights, reshape(upscaled, {b, c, oh * ow}));
    return {reshape(logits, {b, oh, ow})};
}

DecoderOutput AudioSourceDecoder::forward(const PromptTokens& prompt,
                                          const VisualFeature& visual) const {
    const Tensor& field = visual.field;
    if (field.dim() != 4 || field.size(1) != d_ || field.size(2) != grid_ || field.size(3) != grid_) {
        throw ShapeError("decoder expects visual field [B," + std::to_string(d_) + "," +
                         std::to_string(grid_) + "," + std::to_string(grid_) + "], got " +
                         shape_str(field.shape()));
    }
    const std::size_t b = field.size(0);
    if (prompt.tokens.dim() != 3 || prompt.tokens.size(0) != b ||
        prompt.tokens.size(1) != kPromptSlots || prompt.tokens.size(2) != d_) {
        throw ShapeError("decoder expects prompt tokens [" + std::to_string(b) + ",6," +
                         std::to_string(d_) + "], got " + shape_str(prompt.tokens.shape()));
    }
    DecoderOutput out;
    Tensor tokens = prompt.tokens;
    Tensor vis = field_to_tokens(field);
    for (const DecoderLayer& layer : layers_) {
        LayerOutput lo = layer.forward(tokens, vis, pos_);
        tokens = lo.tokens;
        vis = lo.visual;
        out.traces.push_back(std::move(lo.trace));
    }
    out.tokens = tokens;
    out.mask_embedding = tokens_to_field(vis, grid_, grid_);
    out.upscaled = upscale_mask_embedding(out.mask_embedding);
    out.mask = predict_mask(out.upscaled, tokens);
    return out;
}

VisualFeature mask_embedding_feedback(const Tensor& mask_embedding, const VisualFeature& visual) {
    if (mask_embedding.shape() != visual.field.shape()) {
        throw ShapeError("mask embedding " + shape_str(mask_embedding.shape()) +
                         " does not match visual feature " + shape_str(visual.field.shape()));
    }
    return {add(visual.field, mask_embedding)};
}

namespace {

bool contains(const std::string& name, const char* part) {
    return name.find(part) != std::string::npos;
}

}  // namespace

bool is_decoder_param(const std::string& name) { return name.rfind("decoder.", 0) == 0; }

bool is_cola_param(const std::string& name) {
    return is_decoder_param(name) && contains(name, ".cola.");
}

bool is_av_adapter_param(const std::string& name) {
    return is_decoder_param(name) && contains(name, ".av_adapter.");
}

bool is_va_adapter_param(const std::string& name) {
    return is_decoder_param(name) && contains(name, ".va_adapter.");
}

bool decoder_param_trainable(const std::string& name, TuningStrategy strategy) {
    const bool cola = is_cola_param(name);
    const bool av = is_av_adapter_param(name);
    const bool va = is_va_adapter_param(name);
    switch (strategy) {
        case TuningStrategy::Freeze: return false;
        case TuningStrategy::FineTune: return !cola && !av && !va;
        case TuningStrategy::AVAdapter: return av;
        case TuningStrategy::VAAdapter: return va;
        case TuningStrategy::ColA: return cola;
        case TuningStrategy::ColAPlusAVVA: return cola || av || va;
    }
    return false;
}

}  // namespace gavs
