#include "gavs/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "gavs/losses.hpp"
#include "gavs/random.hpp"

namespace gavs {

namespace {

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::string join(const std::vector<std::string>& names) {
    std::string s;
    for (const auto& n : names) s += (s.empty() ? "" : ", ") + n;
    return s.empty() ? "(none found)" : s;
}

std::vector<std::size_t> sample_indices(std::mt19937_64& rng, const std::vector<std::size_t>& pool,
                                        std::size_t n) {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::vector<std::size_t> out(n);
    for (auto& i : out) i = pool[pick(rng)];
    return out;
}

bool is_backbone(const std::string& n) {
    return n.rfind("encoder.visual.", 0) == 0 && n.find(".adapter.") == std::string::npos;
}

}  // namespace

namespace {

ModelOutputs run_forward(const GavsModel& model, const Batch& batch) {
    return batch.visual_prefix.defined() ? model.forward_from_prefix(batch.visual_prefix, batch.audio)
                                         : model.forward(batch.frames, batch.audio);
}

bool has_semantic_term(const RunConfig& cfg) {
    return cfg.decoder.fusion == FusionMode::AudioPrompt && cfg.sap.enabled;
}

ClipFeatures clip_features(const ModelOutputs& out) {
    const std::size_t n = out.cues.size(0);
    return average_features(reshape(out.cues, {n, 1, out.cues.size(1)}),
                            reshape(out.audio, {n, 1, out.audio.size(1)}));
}

}  // namespace

LossTerms compute_loss(const GavsModel& model, const Batch& batch) {
    const RunConfig& cfg = model.config();
    ModelOutputs out = run_forward(model, batch);
    LossTerms t;
    t.seg = seg_loss(out.mask().logits, batch.masks);
    if (has_semantic_term(cfg)) {
        ClipFeatures clip = clip_features(out);
        t.sem = semantic_loss(clip.visual, clip.audio, cfg.train.margin, cfg.train.symmetric_triplet);
    }
    t.total = total_loss(t.seg, t.sem, cfg.train.lambda);
    return t;
}

Tensor loss_summands(const GavsModel& model, const Batch& batch) {
    const RunConfig& cfg = model.config();
    if (cfg.train.lambda < 0) throw ContractError("loss weight must be non-negative");
    ModelOutputs out = run_forward(model, batch);
    const Tensor& logits = out.mask().logits;
    if (logits.shape() != batch.masks.shape()) {
        throw ShapeError("seg_loss: logits " + shape_str(logits.shape()) + " vs mask " +
                         shape_str(batch.masks.shape()));
    }
    Tensor seg = bce_with_logits_terms(logits, batch.masks);
    std::vector<Tensor> parts{scale(reshape(seg, {seg.numel()}), 1.0 / static_cast<double>(seg.numel()))};
    if (has_semantic_term(cfg)) {
        ClipFeatures clip = clip_features(out);
        Tensor sem = semantic_loss_terms(clip.visual, clip.audio, cfg.train.margin,
                                         cfg.train.symmetric_triplet);
        parts.push_back(scale(sem, cfg.train.lambda / static_cast<double>(sem.numel())));
    }
    return concat(parts, 0);
}

LossRecord train_step(GavsModel& model, const Batch& batch, Adam& opt) {
    model.params().zero_grad();
    LossTerms t = compute_loss(model, batch);
    if (!std::isfinite(t.total.item())) {
        std::vector<std::string> bad;
        if (!std::isfinite(t.seg.item())) bad.push_back("loss.seg");
        if (t.sem.defined() && !std::isfinite(t.sem.item())) bad.push_back("loss.sem");
        for (const Parameter& p : model.params().all()) {
            if (!all_finite(p.tensor.data())) bad.push_back(p.name);
        }
        throw NumericError("non-finite loss; offending tensors: " + join(bad));
    }
    t.total.backward();
    std::vector<std::string> bad;
    for (const Parameter& p : model.params().all()) {
        if (p.trainable && p.tensor.has_grad() && !all_finite(p.tensor.grad())) {
            bad.push_back(p.name + ".grad");
        }
    }
    if (!bad.empty()) throw NumericError("non-finite gradients: " + join(bad));
    opt.step(model.params());
    LossRecord r;
    r.total = t.total.item();
    r.seg = t.seg.item();
    r.sem = t.sem.defined() ? t.sem.item() : 0.0;
    return r;
}

FeatureCache::FeatureCache(const GavsModel& model, const Dataset& ds,
                           const std::vector<std::size_t>& idx) {
    NoGradGuard no_grad;
    std::vector<std::size_t> todo(idx.begin(), idx.end());
    std::sort(todo.begin(), todo.end());
    todo.erase(std::unique(todo.begin(), todo.end()), todo.end());
    constexpr std::size_t kChunk = 32;
    for (std::size_t start = 0; start < todo.size(); start += kChunk) {
        std::vector<std::size_t> chunk(todo.begin() + start,
                                       todo.begin() + std::min(todo.size(), start + kChunk));
        Tensor pre = model.visual_encoder().prefix(stack_frames(ds, chunk));
        row_shape_ = {pre.size(1), pre.size(2)};
        const std::size_t row = pre.size(1) * pre.size(2);
        auto d = pre.data();
        for (std::size_t k = 0; k < chunk.size(); ++k) {
            rows_[chunk[k]].assign(d.begin() + k * row, d.begin() + (k + 1) * row);
        }
    }
}

Tensor FeatureCache::gather(const std::vector<std::size_t>& idx) const {
    std::vector<double> v;
    v.reserve(idx.size() * shape_numel(row_shape_));
    for (std::size_t i : idx) {
        auto it = rows_.find(i);
        if (it == rows_.end()) throw ContractError("scene " + std::to_string(i) + " not cached");
        v.insert(v.end(), it->second.begin(), it->second.end());
    }
    return Tensor::from({idx.size(), row_shape_[0], row_shape_[1]}, std::move(v));
}

Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& idx, const FeatureCache* cache) {
    Batch b;
    if (cache) {
        b.visual_prefix = cache->gather(idx);
    } else {
        b.frames = stack_frames(ds, idx);
    }
    b.audio = stack_audio(ds, idx);
    b.masks = stack_masks(ds, idx);
    return b;
}

namespace {

// Class of the object under each patch center, background = num_classes.
std::vector<int> patch_labels(const SceneSample& s, std::size_t grid, std::size_t patch,
                              int background) {
    std::vector<int> labels(grid * grid, background);
    for (std::size_t gy = 0; gy < grid; ++gy) {
        for (std::size_t gx = 0; gx < grid; ++gx) {
            const double x = (gx + 0.5) * patch;
            const double y = (gy + 0.5) * patch;
            for (const SceneObject& o : s.objects) {
                if (o.covers(x, y)) labels[gy * grid + gx] = o.cls;
            }
        }
    }
    return labels;
}

}  // namespace

void pretrain_foundation(GavsModel& model, const LossCallback& on_step) {
    const RunConfig cfg = model.config();
    if (!cfg.train.pretrain) return;
    ParameterStore& store = model.params();
    const std::size_t grid = cfg.encoder.grid();
    const std::size_t mask_size = 4 * grid;

    DataConfig dc = cfg.data;
    dc.num_scenes = cfg.train.pretrain_scenes;
    dc.seed = derive_seed(cfg.train.seed, "foundation-corpus");
    const Dataset corpus = generate_synthetic_dataset(dc, mask_size);
    std::vector<std::size_t> all(corpus.scenes.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    std::mt19937_64 rng(derive_seed(cfg.train.seed, "foundation-batches"));
    const std::size_t bsz = cfg.train.batch_size;
    const AdamConfig acfg{cfg.train.pretrain_lr, cfg.train.beta1, cfg.train.beta2, cfg.train.adam_eps};

    // Backbone: per-patch classification.
    store.set_all_trainable(false);
    store.set_trainable_if([](const std::string& n) {
        return is_backbone(n) || n.rfind("pretrain.patch_head.", 0) == 0;
    }, true);
    std::vector<std::vector<int>> labels;
    for (const SceneSample& s : corpus.scenes) {
        labels.push_back(patch_labels(s, grid, cfg.encoder.patch_size,
                                      static_cast<int>(cfg.data.num_classes)));
    }
    {
        Adam opt(acfg);
        for (std::size_t step = 1; step <= cfg.train.backbone_pretrain_steps; ++step) {
            auto idx = sample_indices(rng, all, bsz);
            std::vector<int> targets;
            for (std::size_t i : idx) targets.insert(targets.end(), labels[i].begin(), labels[i].end());
            store.zero_grad();
            Tensor logits = model.patch_class_logits(stack_frames(corpus, idx));
            Tensor loss = cross_entropy_with_logits(
                reshape(logits, {idx.size() * grid * grid, logits.size(2)}), targets);
            if (!std::isfinite(loss.item())) throw NumericError("non-finite backbone pretraining loss");
            loss.backward();
            opt.step(store);
            if (on_step) on_step({"backbone", step, loss.item(), loss.item(), 0.0});
        }
    }

    // Decoder: segment the object under a point prompt.
    store.set_all_trainable(false);
    store.set_trainable_if([](const std::string& n) {
        return (is_decoder_param(n) && decoder_param_trainable(n, TuningStrategy::FineTune)) ||
               n == "pretrain.tokens" || n.rfind("pretrain.point.", 0) == 0;
    }, true);
    model.decoder().set_strategy(TuningStrategy::FineTune);  // adapters off
    {
        FeatureCache cache(model, corpus, all);
        Adam opt(acfg);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (std::size_t step = 1; step <= cfg.train.decoder_pretrain_steps; ++step) {
            auto idx = sample_indices(rng, all, bsz);
            std::vector<double> points;
            std::vector<double> target;
            for (std::size_t i : idx) {
                const SceneSample& s = corpus.scenes[i];
                const SceneObject& o = s.objects[static_cast<std::size_t>(unit(rng) * s.objects.size()) %
                                                 s.objects.size()];
                auto fp = object_footprint(o, s.image_size, mask_size);
                std::vector<std::size_t> inside;
                for (std::size_t p = 0; p < fp.size(); ++p) {
                    if (fp[p]) inside.push_back(p);
                }
                const std::size_t p = inside[static_cast<std::size_t>(unit(rng) * inside.size()) % inside.size()];
                points.push_back((p % mask_size + 0.5) / mask_size);
                points.push_back((p / mask_size + 0.5) / mask_size);
                target.insert(target.end(), fp.begin(), fp.end());
            }
            store.zero_grad();
            PromptTokens prompt{model.point_prompt_tokens(points, idx.size())};
            VisualFeature vis = model.visual_encoder().resume(cache.gather(idx));
            DecoderOutput out = model.decoder().forward(prompt, vis);
            Tensor loss = seg_loss(out.mask.logits,
                                   Tensor::from({idx.size(), mask_size, mask_size}, std::move(target)));
            if (!std::isfinite(loss.item())) throw NumericError("non-finite decoder pretraining loss");
            loss.backward();
            opt.step(store);
            if (on_step) on_step({"decoder", step, loss.item(), loss.item(), 0.0});
        }
    }

    model.adopt_foundation_tokens();
    model.set_strategy(cfg.decoder.strategy);
}

ParameterSnapshot snapshot_foundation(const GavsModel& model) {
    ParameterSnapshot snap;
    for (const Parameter& p : model.params().all()) {
        if (is_backbone(p.name) || is_decoder_param(p.name) || p.name.rfind("pretrain.", 0) == 0) {
            auto d = p.tensor.data();
            snap[p.name].assign(d.begin(), d.end());
        }
    }
    return snap;
}

void load_foundation(GavsModel& model, const ParameterSnapshot& snap) {
    for (const auto& [name, values] : snap) {
        Parameter& p = model.params().get(name);
        if (p.tensor.numel() != values.size()) {
            throw ShapeError("foundation parameter " + name + " has " + std::to_string(values.size()) +
                             " values, model expects " + std::to_string(p.tensor.numel()));
        }
        std::copy(values.begin(), values.end(), p.tensor.mutable_data().begin());
    }
    if (model.config().train.pretrain) model.adopt_foundation_tokens();
}

std::vector<LossRecord> train_gavs(GavsModel& model, const Dataset& ds,
                                   const std::vector<std::size_t>& train_idx,
                                   const LossCallback& on_step) {
    const RunConfig& cfg = model.config();
    if (train_idx.empty()) throw ConfigError("empty training manifest");
    model.apply_tuning();
    std::unique_ptr<FeatureCache> cache;
    if (model.prefix_frozen()) cache = std::make_unique<FeatureCache>(model, ds, train_idx);
    Adam opt({cfg.train.lr, cfg.train.beta1, cfg.train.beta2, cfg.train.adam_eps});
    std::mt19937_64 rng(derive_seed(cfg.train.seed, "task-batches"));
    std::vector<LossRecord> log;
    for (std::size_t step = 1; step <= cfg.train.steps; ++step) {
        auto idx = sample_indices(rng, train_idx, cfg.train.batch_size);
        LossRecord r = train_step(model, make_batch(ds, idx, cache.get()), opt);
        r.phase = "avs";
        r.step = step;
        if (on_step) on_step(r);
        log.push_back(r);
    }
    return log;
}

void write_loss_csv(std::ostream& out, const std::vector<LossRecord>& records) {
    out << "phase,step,loss,seg,sem\n";
    char buf[160];
    for (const LossRecord& r : records) {
        std::snprintf(buf, sizeof buf, "%s,%zu,%.17g,%.17g,%.17g\n", r.phase.c_str(), r.step,
                      r.total, r.seg, r.sem);
        out << buf;
    }
}

}  // namespace gavs
