#include "gavs/config.hpp"

#include <cstdio>
#include <fstream>

#include "gavs/errors.hpp"

namespace gavs {

using nlohmann::json;

std::string to_string(TuningStrategy s) {
    switch (s) {
        case TuningStrategy::Freeze: return "freeze";
        case TuningStrategy::FineTune: return "fine-tune";
        case TuningStrategy::AVAdapter: return "av-adapter";
        case TuningStrategy::VAAdapter: return "va-adapter";
        case TuningStrategy::ColA: return "cola";
        case TuningStrategy::ColAPlusAVVA: return "cola+av+va";
    }
    return "?";
}

std::string to_string(FusionMode m) {
    return m == FusionMode::AudioPrompt ? "audio-prompt" : "av-fusion";
}

TuningStrategy parse_strategy(const std::string& s) {
    for (auto v : {TuningStrategy::Freeze, TuningStrategy::FineTune, TuningStrategy::AVAdapter,
                   TuningStrategy::VAAdapter, TuningStrategy::ColA, TuningStrategy::ColAPlusAVVA}) {
        if (to_string(v) == s) return v;
    }
    throw ConfigError("unknown tuning strategy '" + s + "'");
}

FusionMode parse_fusion_mode(const std::string& s) {
    if (s == "audio-prompt") return FusionMode::AudioPrompt;
    if (s == "av-fusion") return FusionMode::AVFusion;
    throw ConfigError("unknown fusion mode '" + s + "'");
}

void EncoderConfig::validate() const {
    if (patch_size == 0 || image_size % patch_size != 0) {
        throw ConfigError("encoder.image_size " + std::to_string(image_size) +
                          " not divisible by encoder.patch_size " + std::to_string(patch_size));
    }
    if (adapter_dim >= d_v) throw ConfigError("encoder.adapter_dim must be < encoder.d_v");
    if (n_heads == 0 || d_v % n_heads != 0) throw ConfigError("encoder.d_v not divisible by n_heads");
}

void RunConfig::validate() const {
    encoder.validate();
    if (encoder.d_v % 8 != 0) throw ConfigError("encoder.d_v must be divisible by 8");
    if (decoder.n_heads == 0 || encoder.d_v % decoder.n_heads != 0) {
        throw ConfigError("encoder.d_v not divisible by decoder.n_heads");
    }
    if (data.image_size != encoder.image_size) {
        throw ConfigError("data.image_size must equal encoder.image_size");
    }
    if (data.num_classes < 4) throw ConfigError("data.num_classes must be >= 4");
    if (train.margin <= 0.0) throw ConfigError("train.margin must be > 0");
    if (train.lambda < 0.0) throw ConfigError("train.lambda must be >= 0");
    if (train.batch_size == 0) throw ConfigError("train.batch_size must be > 0");
    if (sap.noise_init != "uniform" && sap.noise_init != "zero") {
        throw ConfigError("sap.noise_init must be 'uniform' or 'zero'");
    }
    if (split.shots != 0 && split.shots != 1 && split.shots != 3 && split.shots != 5) {
        throw ConfigError("split.shots must be one of 0, 1, 3, 5");
    }
}

json to_json(const RunConfig& c) {
    json j;
    j["encoder"] = {{"image_size", c.encoder.image_size},
                    {"patch_size", c.encoder.patch_size},
                    {"d_v", c.encoder.d_v},
                    {"n_layers", c.encoder.n_layers},
                    {"n_heads", c.encoder.n_heads},
                    {"mlp_ratio", c.encoder.mlp_ratio},
                    {"adapter_dim", c.encoder.adapter_dim},
                    {"adapters_enabled", c.encoder.adapters_enabled},
                    {"d_m", c.encoder.d_m},
                    {"audio_hidden", c.encoder.audio_hidden}};
    j["sap"] = {{"enabled", c.sap.enabled},
                {"d_n", c.sap.d_n},
                {"noise_init", c.sap.noise_init},
                {"cue_hidden", c.sap.cue_hidden}};
    j["decoder"] = {{"n_layers", c.decoder.n_layers},
                    {"n_heads", c.decoder.n_heads},
                    {"mlp_dim", c.decoder.mlp_dim},
                    {"cola_rank", c.decoder.cola_rank},
                    {"attn_adapter_rank", c.decoder.attn_adapter_rank},
                    {"tuning_strategy", to_string(c.decoder.strategy)},
                    {"fusion_mode", to_string(c.decoder.fusion)},
                    {"feedback_enabled", c.decoder.feedback_enabled}};
    j["data"] = {{"num_classes", c.data.num_classes},
                 {"num_scenes", c.data.num_scenes},
                 {"image_size", c.data.image_size},
                 {"gamma", c.data.gamma},
                 {"sigma", c.data.sigma},
                 {"distractor_rate", c.data.distractor_rate},
                 {"nuisance_dims", c.data.nuisance_dims},
                 {"seed", c.data.seed}};
    j["split"] = {{"unseen_classes", c.split.unseen_classes},
                  {"num_unseen", c.split.num_unseen},
                  {"shots", c.split.shots},
                  {"seen_test", c.split.seen_test},
                  {"seed", c.split.seed}};
    j["train"] = {{"steps", c.train.steps},
                  {"batch_size", c.train.batch_size},
                  {"lr", c.train.lr},
                  {"beta1", c.train.beta1},
                  {"beta2", c.train.beta2},
                  {"adam_eps", c.train.adam_eps},
                  {"margin", c.train.margin},
                  {"lambda", c.train.lambda},
                  {"symmetric_triplet", c.train.symmetric_triplet},
                  {"seed", c.train.seed},
                  {"pretrain", c.train.pretrain},
                  {"pretrain_scenes", c.train.pretrain_scenes},
                  {"backbone_pretrain_steps", c.train.backbone_pretrain_steps},
                  {"decoder_pretrain_steps", c.train.decoder_pretrain_steps},
                  {"pretrain_lr", c.train.pretrain_lr},
                  {"freeze", c.train.freeze},
                  {"log_every", c.train.log_every}};
    j["eval"] = {{"beta2", c.eval.beta2}, {"threshold", c.eval.threshold}};
    return j;
}

namespace {

template <typename T>
void read(const json& section, const char* key, T& out) {
    if (section.contains(key)) out = section.at(key).get<T>();
}

void check_keys(const json& section, const std::string& name,
                std::initializer_list<const char*> known) {
    for (auto it = section.begin(); it != section.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw ConfigError("unknown config key '" + name + "." + it.key() + "'");
    }
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        if (k != "encoder" && k != "sap" && k != "decoder" && k != "data" && k != "split" &&
            k != "train" && k != "eval") {
            throw ConfigError("unknown config section '" + k + "'");
        }
    }
    try {
        if (j.contains("encoder")) {
            const json& s = j.at("encoder");
            check_keys(s, "encoder",
                       {"image_size", "patch_size", "d_v", "n_layers", "n_heads", "mlp_ratio",
                        "adapter_dim", "adapters_enabled", "d_m", "audio_hidden"});
            read(s, "image_size", c.encoder.image_size);
            read(s, "patch_size", c.encoder.patch_size);
            read(s, "d_v", c.encoder.d_v);
            read(s, "n_layers", c.encoder.n_layers);
            read(s, "n_heads", c.encoder.n_heads);
            read(s, "mlp_ratio", c.encoder.mlp_ratio);
            read(s, "adapter_dim", c.encoder.adapter_dim);
            read(s, "adapters_enabled", c.encoder.adapters_enabled);
            read(s, "d_m", c.encoder.d_m);
            read(s, "audio_hidden", c.encoder.audio_hidden);
        }
        if (j.contains("sap")) {
            const json& s = j.at("sap");
            check_keys(s, "sap", {"enabled", "d_n", "noise_init", "cue_hidden"});
            read(s, "enabled", c.sap.enabled);
            read(s, "d_n", c.sap.d_n);
            read(s, "noise_init", c.sap.noise_init);
            read(s, "cue_hidden", c.sap.cue_hidden);
        }
        if (j.contains("decoder")) {
            const json& s = j.at("decoder");
            check_keys(s, "decoder",
                       {"n_layers", "n_heads", "mlp_dim", "cola_rank", "attn_adapter_rank",
                        "tuning_strategy", "fusion_mode", "feedback_enabled"});
            read(s, "n_layers", c.decoder.n_layers);
            read(s, "n_heads", c.decoder.n_heads);
            read(s, "mlp_dim", c.decoder.mlp_dim);
            read(s, "cola_rank", c.decoder.cola_rank);
            read(s, "attn_adapter_rank", c.decoder.attn_adapter_rank);
            if (s.contains("tuning_strategy")) {
                c.decoder.strategy = parse_strategy(s.at("tuning_strategy").get<std::string>());
            }
            if (s.contains("fusion_mode")) {
                c.decoder.fusion = parse_fusion_mode(s.at("fusion_mode").get<std::string>());
            }
            read(s, "feedback_enabled", c.decoder.feedback_enabled);
        }
        if (j.contains("data")) {
            const json& s = j.at("data");
            check_keys(s, "data",
                       {"num_classes", "num_scenes", "image_size", "gamma", "sigma",
                        "distractor_rate", "nuisance_dims", "seed"});
            read(s, "num_classes", c.data.num_classes);
            read(s, "num_scenes", c.data.num_scenes);
            read(s, "image_size", c.data.image_size);
            read(s, "gamma", c.data.gamma);
            read(s, "sigma", c.data.sigma);
            read(s, "distractor_rate", c.data.distractor_rate);
            read(s, "nuisance_dims", c.data.nuisance_dims);
            read(s, "seed", c.data.seed);
        }
        if (j.contains("split")) {
            const json& s = j.at("split");
            check_keys(s, "split", {"unseen_classes", "num_unseen", "shots", "seen_test", "seed"});
            read(s, "unseen_classes", c.split.unseen_classes);
            read(s, "num_unseen", c.split.num_unseen);
            read(s, "shots", c.split.shots);
            read(s, "seen_test", c.split.seen_test);
            read(s, "seed", c.split.seed);
        }
        if (j.contains("train")) {
            const json& s = j.at("train");
            check_keys(s, "train",
                       {"steps", "batch_size", "lr", "beta1", "beta2", "adam_eps", "margin",
                        "lambda", "symmetric_triplet", "seed", "pretrain", "pretrain_scenes",
                        "backbone_pretrain_steps", "decoder_pretrain_steps", "pretrain_lr",
                        "freeze", "log_every"});
            read(s, "steps", c.train.steps);
            read(s, "batch_size", c.train.batch_size);
            read(s, "lr", c.train.lr);
            read(s, "beta1", c.train.beta1);
            read(s, "beta2", c.train.beta2);
            read(s, "adam_eps", c.train.adam_eps);
            read(s, "margin", c.train.margin);
            read(s, "lambda", c.train.lambda);
            read(s, "symmetric_triplet", c.train.symmetric_triplet);
            read(s, "seed", c.train.seed);
            read(s, "pretrain", c.train.pretrain);
            read(s, "pretrain_scenes", c.train.pretrain_scenes);
            read(s, "backbone_pretrain_steps", c.train.backbone_pretrain_steps);
            read(s, "decoder_pretrain_steps", c.train.decoder_pretrain_steps);
            read(s, "pretrain_lr", c.train.pretrain_lr);
            read(s, "freeze", c.train.freeze);
            read(s, "log_every", c.train.log_every);
        }
        if (j.contains("eval")) {
            const json& s = j.at("eval");
            check_keys(s, "eval", {"beta2", "threshold"});
            read(s, "beta2", c.eval.beta2);
            read(s, "threshold", c.eval.threshold);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    return c;
}

void apply_override(RunConfig& cfg, const std::string& dotted_key, const std::string& value) {
    const auto dot = dotted_key.find('.');
    if (dot == std::string::npos) throw ConfigError("override key must be section.key: " + dotted_key);
    json j = to_json(cfg);
    const std::string section = dotted_key.substr(0, dot);
    const std::string key = dotted_key.substr(dot + 1);
    if (!j.contains(section) || !j.at(section).contains(key)) {
        throw ConfigError("unknown config key '" + dotted_key + "'");
    }
    json parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = value;  // bare strings such as strategy names
    j[section][key] = parsed;
    cfg = run_config_from_json(j);
}

std::string config_hash(const RunConfig& cfg) {
    const std::string canonical = to_json(cfg).dump();
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char ch : canonical) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file " + path + " is not valid JSON");
    return run_config_from_json(j);
}

}  // namespace gavs
