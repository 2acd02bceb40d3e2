#include "gavs/encoders.hpp"

namespace gavs {

Tensor EncoderBlock::body(const Tensor& h) const {
    Tensor x = ln_attn(h);
    Tensor a = add(h, attn(x, x, x));
    return add(a, mlp(ln_mlp(a)));
}

VisualEncoder::VisualEncoder(const EncoderConfig& cfg, ParameterStore& store)
    : cfg_(cfg) {
    cfg_.validate();
    const std::size_t d = cfg.d_v;
    const std::size_t patch_dim = 3 * cfg.patch_size * cfg.patch_size;
    const std::size_t n_tokens = cfg.grid() * cfg.grid();
    patch_embed_ = Linear::create(store, "encoder.visual.patch", patch_dim, d);
    pos_ = store.uniform_range("encoder.visual.pos", {n_tokens, d}, 0.02);
    for (std::size_t i = 0; i < cfg.n_layers; ++i) {
        const std::string p = "encoder.visual.block" + std::to_string(i);
        EncoderBlock b;
        b.ln_attn = LayerNorm::create(store, p + ".ln_attn", d);
        b.attn = MultiHeadAttention::create(store, p + ".attn", d, cfg.n_heads);
        b.ln_mlp = LayerNorm::create(store, p + ".ln_mlp", d);
        b.mlp = Mlp::create(store, p + ".mlp", d, d * cfg.mlp_ratio, d, Activation::Gelu);
        if (cfg.adapters_enabled) {
            b.adapter = BottleneckAdapter::create(store, p + ".adapter", d, cfg.adapter_dim);
            b.has_adapter = true;
        }
        blocks_.push_back(std::move(b));
    }
    neck_ = LayerNorm::create(store, "encoder.visual.neck", d);
}

Tensor VisualEncoder::patchify(const Tensor& frames) const {
    if (frames.dim() != 4 || frames.size(1) != 3 || frames.size(2) != cfg_.image_size ||
        frames.size(3) != cfg_.image_size) {
        throw ShapeError("encode_frames expects [B,3," + std::to_string(cfg_.image_size) + "," +
                         std::to_string(cfg_.image_size) + "], got " + shape_str(frames.shape()));
    }
    const std::size_t b = frames.size(0);
    const std::size_t g = cfg_.grid();
    const std::size_t p = cfg_.patch_size;
    Tensor x = reshape(frames, {b, 3, g, p, g, p});
    x = permute(x, {0, 2, 4, 1, 3, 5});  // [B, gy, gx, c, py, px]
    return reshape(x, {b, g * g, 3 * p * p});
}

Tensor VisualEncoder::prefix(const Tensor& frames) const {
    Tensor h = add(patch_embed_(patchify(frames)), pos_);
    return blocks_.empty() ? h : blocks_.front().body(h);
}

Tensor VisualEncoder::resume_tokens(const Tensor& hidden) const {
    Tensor h = hidden;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        if (i > 0) h = blocks_[i].body(h);
        h = blocks_[i].adapt(h);
    }
    return neck_(h);
}

VisualFeature VisualEncoder::resume(const Tensor& hidden) const {
    return {tokens_to_field(resume_tokens(hidden), cfg_.grid(), cfg_.grid())};
}

Tensor VisualEncoder::tokens(const Tensor& frames) const { return resume_tokens(prefix(frames)); }

VisualFeature VisualEncoder::encode_frames(const Tensor& frames) const {
    return resume(prefix(frames));
}

AudioEncoder::AudioEncoder(std::size_t d_in, std::size_t hidden, std::size_t d_m,
                           ParameterStore& store)
    : d_in_(d_in) {
    mlp_ = Mlp::create(store, "encoder.audio", d_in, hidden, d_m, Activation::Relu);
}

AudioFeature AudioEncoder::encode_audio(const Tensor& audio) const {
    if (audio.size(-1) != d_in_) {
        throw ShapeError("encode_audio expects last dim " + std::to_string(d_in_) + ", got " +
                         shape_str(audio.shape()));
    }
    return {mlp_(audio)};
}

AudioFeature AudioEncoder::encode_audio(const Tensor& audio, std::size_t expected_frames) const {
    if (audio.dim() < 2 || audio.size(-2) != expected_frames) {
        throw ContractError("audio clip " + shape_str(audio.shape()) + " does not have " +
                            std::to_string(expected_frames) + " frames");
    }
    return encode_audio(audio);
}

Tensor global_average_pool(const VisualFeature& feature) {
    const Tensor& f = feature.field;
    if (f.dim() == 3) return mean_over(reshape(f, {f.size(0), f.size(1) * f.size(2)}), -1);
    if (f.dim() != 4) throw ShapeError("GAP expects [d,H,W] or [B,d,H,W], got " + shape_str(f.shape()));
    return mean_over(reshape(f, {f.size(0), f.size(1), f.size(2) * f.size(3)}), -1);
}

Tensor tokens_to_field(const Tensor& tokens, std::size_t h, std::size_t w) {
    const std::size_t b = tokens.size(0);
    const std::size_t d = tokens.size(2);
    return reshape(permute(tokens, {0, 2, 1}), {b, d, h, w});
}

Tensor field_to_tokens(const Tensor& field) {
    const std::size_t b = field.size(0);
    const std::size_t d = field.size(1);
    return permute(reshape(field, {b, d, field.size(2) * field.size(3)}), {0, 2, 1});
}

}  // namespace gavs
