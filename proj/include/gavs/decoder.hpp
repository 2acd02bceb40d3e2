#pragma once

#include <vector>

#include "gavs/config.hpp"
#include "gavs/encoders.hpp"
#include "gavs/layers.hpp"
#include "gavs/sap.hpp"

namespace gavs {

// Intermediates of one decoder layer, kept for inspection and tests.
struct LayerTrace {
    Tensor tokens_after_self_attn;  // [B, 6, d]
    Tensor context;                 // F_context = tokens + CMA(tokens, visual)
    Tensor prompt_update;           // F_P' = MLP(.) + ColA(MLP(.))
    Tensor key;                     // K = F_context + F_P'
    Tensor visual_update;           // F_V' = visual + CMA(visual, K)
};

struct LayerOutput {
    Tensor tokens;  // [B, 6, d]
    Tensor visual;  // [B, HW, d]
    LayerTrace trace;
};

// Queries from one modality attend to the other modality's set; [B,n,d] x [B,m,d] -> [B,n,d].
Tensor cross_modal_attention(const MultiHeadAttention& attn, const Tensor& query_set,
                             const Tensor& kv_set);

// Two-way layer. Post-norm: each residual sum is layer-normalized before the
// next sublayer consumes it. Adapter flags decide which adapters run; the
// adapter parameters always exist so every strategy shares one parameter set.
struct DecoderLayer {
    MultiHeadAttention self_attn;
    LayerNorm ln_self;
    MultiHeadAttention av_attn;
    BottleneckAdapter av_adapter;
    LayerNorm ln_context;
    Mlp mlp;
    BottleneckAdapter cola;
    LayerNorm ln_key;
    MultiHeadAttention va_attn;
    BottleneckAdapter va_adapter;
    LayerNorm ln_visual;

    bool use_cola = false;
    bool use_av_adapter = false;
    bool use_va_adapter = false;

    // tokens [B,6,d]; visual [B,HW,d]; pos [HW,d] is added to visual keys/queries.
    LayerOutput forward(const Tensor& tokens, const Tensor& visual, const Tensor& pos) const;
};

// ColA(h) = W_up act(W_down h); the caller adds it to h.
Tensor cola_forward(const BottleneckAdapter& cola, const Tensor& h);

struct MaskPrediction {
    Tensor logits;  // [B, 4H, 4W]

    Tensor probabilities() const { return sigmoid(logits); }
    // Binary mask at `threshold` on probabilities, as 0/1 doubles.
    std::vector<double> binary(double threshold = 0.5) const;
};

struct DecoderOutput {
    Tensor tokens;          // final F_P [B,6,d]
    Tensor mask_embedding;  // F_M [B,d,H,W]
    Tensor upscaled;        // F_up [B,d/8,4H,4W]
    MaskPrediction mask;
    std::vector<LayerTrace> traces;
};

class AudioSourceDecoder {
public:
    AudioSourceDecoder() = default;
    AudioSourceDecoder(const EncoderConfig& enc, const DecoderConfig& cfg, ParameterStore& store);

    // Enables exactly the adapters the strategy tunes.
    void set_strategy(TuningStrategy strategy);

    DecoderOutput forward(const PromptTokens& prompt, const VisualFeature& visual) const;

    // [B,d,H,W] -> [B,d/8,4H,4W] through two stride-2 transposed convolutions.
    Tensor upscale_mask_embedding(const Tensor& mask_embedding) const;
    // M_pred[y,x] = <F_up[:,y,x], MLP(F_P[1])>.
    MaskPrediction predict_mask(const Tensor& upscaled, const Tensor& tokens) const;

    std::vector<DecoderLayer>& layers() { return layers_; }
    const std::vector<DecoderLayer>& layers() const { return layers_; }

private:
    std::size_t d_ = 0;
    std::size_t grid_ = 0;
    Tensor pos_;
    std::vector<DecoderLayer> layers_;
    Tensor up1_kernel_, up1_bias_, up2_kernel_, up2_bias_;
    Mlp mask_mlp_;
};

// F_V + F_M; shapes must match exactly.
VisualFeature mask_embedding_feedback(const Tensor& mask_embedding, const VisualFeature& visual);

// Decoder parameter-name predicates used by tuning strategies.
bool is_decoder_param(const std::string& name);
bool is_cola_param(const std::string& name);
bool is_av_adapter_param(const std::string& name);
bool is_va_adapter_param(const std::string& name);

// True when `name` is trainable under `strategy` (decoder parameters only).
bool decoder_param_trainable(const std::string& name, TuningStrategy strategy);

}  // namespace gavs
