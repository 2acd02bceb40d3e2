#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace gavs {

// Which decoder parameters an optimizer step may touch.
enum class TuningStrategy { Freeze, FineTune, AVAdapter, VAAdapter, ColA, ColAPlusAVVA };

// AudioPrompt builds prompt tokens from audio; AVFusion adds projected audio
// into the visual field and uses learned, audio-free prompt tokens.
enum class FusionMode { AudioPrompt, AVFusion };

std::string to_string(TuningStrategy s);
std::string to_string(FusionMode m);
TuningStrategy parse_strategy(const std::string& s);
FusionMode parse_fusion_mode(const std::string& s);

struct EncoderConfig {
    std::size_t image_size = 32;
    std::size_t patch_size = 4;
    std::size_t d_v = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t mlp_ratio = 2;
    std::size_t adapter_dim = 8;
    bool adapters_enabled = false;
    std::size_t d_m = 16;
    std::size_t audio_hidden = 32;

    std::size_t grid() const { return image_size / patch_size; }
    void validate() const;
};

struct SapConfig {
    bool enabled = true;
    std::size_t d_n = 0;  // 0 means "same as d_m"
    std::string noise_init = "uniform";  // "uniform" (+-0.02) or "zero"
    std::size_t cue_hidden = 32;
};

struct DecoderConfig {
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t mlp_dim = 128;
    std::size_t cola_rank = 8;
    std::size_t attn_adapter_rank = 8;
    TuningStrategy strategy = TuningStrategy::ColA;
    FusionMode fusion = FusionMode::AudioPrompt;
    bool feedback_enabled = false;
};

struct DataConfig {
    std::size_t num_classes = 8;
    std::size_t num_scenes = 1200;
    std::size_t image_size = 32;
    double gamma = 1.0;       // class one-hot amplitude in the audio vector
    double sigma = 0.1;       // audio noise std
    double distractor_rate = 0.5;
    std::size_t nuisance_dims = 4;
    std::uint64_t seed = 1;

    std::size_t audio_dim() const { return num_classes + nuisance_dims; }
};

struct SplitConfig {
    std::vector<int> unseen_classes;  // empty: pick `num_unseen` by seed
    std::size_t num_unseen = 2;
    std::size_t shots = 0;
    std::size_t seen_test = 200;  // held-out scenes with only seen classes
    std::uint64_t seed = 1;
};

struct TrainConfig {
    std::size_t steps = 2000;
    std::size_t batch_size = 8;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double margin = 0.5;
    double lambda = 0.1;
    bool symmetric_triplet = false;
    std::uint64_t seed = 1;
    // Foundation pretraining of the visual backbone and the decoder.
    bool pretrain = true;
    std::size_t pretrain_scenes = 600;
    std::size_t backbone_pretrain_steps = 600;
    std::size_t decoder_pretrain_steps = 1500;
    double pretrain_lr = 2e-3;
    // Extra parameter-name prefixes forced frozen after the strategy is applied.
    std::vector<std::string> freeze;
    std::size_t log_every = 0;
};

struct EvalConfig {
    double beta2 = 0.3;
    double threshold = 0.5;
};

struct RunConfig {
    EncoderConfig encoder;
    SapConfig sap;
    DecoderConfig decoder;
    DataConfig data;
    SplitConfig split;
    TrainConfig train;
    EvalConfig eval;

    std::size_t d_n() const { return sap.d_n == 0 ? encoder.d_m : sap.d_n; }
    void validate() const;
};

// Namespaced keys: encoder.*, sap.*, decoder.*, data.*, split.*, train.*, eval.*.
nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);
// Apply "section.key=value" style overrides on top of an existing config.
void apply_override(RunConfig& cfg, const std::string& dotted_key, const std::string& value);
// Stable content hash of the canonical JSON form.
std::string config_hash(const RunConfig& cfg);

RunConfig load_run_config(const std::string& path);

}  // namespace gavs
