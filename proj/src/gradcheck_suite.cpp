#include "gavs/gradcheck_suite.hpp"

#include <chrono>
#include <functional>
#include <random>

#include "gavs/layers.hpp"
#include "gavs/random.hpp"
#include "gavs/trainer.hpp"

namespace gavs {

namespace {

Tensor random_leaf(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = dist(rng);
    return Tensor::from(shape, std::move(v), true);
}

// sum(t * w) with fixed random w, so gradients are not all equal.
Tensor weighted(const Tensor& t) {
    std::mt19937_64 rng(t.numel());
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> w(t.numel());
    for (double& x : w) x = dist(rng);
    return sum(mul(t, Tensor::from(t.shape(), std::move(w))));
}

GradcheckCaseResult timed(const std::string& name, const std::function<Tensor()>& f,
                          std::vector<Parameter> params) {
    const auto t0 = std::chrono::steady_clock::now();
    GradcheckCaseResult r;
    r.name = name;
    r.report = finite_diff_gradcheck(f, std::move(params));
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.passed = r.report.max_rel_error <= kGradcheckTolerance;
    return r;
}

}  // namespace

std::vector<GradcheckCaseResult> gradcheck_ops(std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, "gradcheck-ops"));
    auto a = random_leaf({3, 4}, rng);
    auto b = random_leaf({3, 4}, rng);
    auto row = random_leaf({4}, rng);
    auto w = random_leaf({4, 5}, rng);
    auto bias = random_leaf({5}, rng);
    auto bat = random_leaf({2, 3, 4}, rng);
    auto bw = random_leaf({2, 4, 2}, rng);
    auto gain = random_leaf({4}, rng, 0.5, 1.5);
    auto beta = random_leaf({4}, rng);
    auto img = random_leaf({2, 3, 3}, rng);
    auto kern = random_leaf({2, 3, 2, 2}, rng);
    auto kbias = random_leaf({3}, rng);
    auto sq = random_leaf({3, 3}, rng);
    auto target = Tensor::from({3, 4}, {1, 0, 0, 1, 1, 1, 0, 0, 1, 0, 1, 0});
    auto probe = random_leaf({3, 4}, rng);
    probe.set_requires_grad(false);

    ParameterStore store(derive_seed(seed, "gradcheck-attention"));
    MultiHeadAttention attn = MultiHeadAttention::create(store, "attn", 4, 2);
    auto queries = random_leaf({1, 2, 4}, rng);
    auto keys = random_leaf({1, 3, 4}, rng);
    std::vector<Parameter> attn_params = store.all();
    attn_params.push_back({"queries", queries});
    attn_params.push_back({"keys", keys});

    std::vector<GradcheckCaseResult> out;
    auto run = [&](const std::string& name, const std::function<Tensor()>& f,
                   std::vector<Parameter> params) { out.push_back(timed(name, f, std::move(params))); };
    run("add", [&] { return weighted(add(a, row)); }, {{"a", a}, {"row", row}});
    run("sub", [&] { return weighted(sub(a, b)); }, {{"a", a}, {"b", b}});
    run("mul", [&] { return weighted(mul(a, b)); }, {{"a", a}, {"b", b}});
    run("scale", [&] { return weighted(scale(add_scalar(a, 0.3), -1.7)); }, {{"a", a}});
    run("matmul", [&] { return weighted(matmul(a, w)); }, {{"a", a}, {"w", w}});
    run("matmul_batched", [&] { return weighted(matmul(bat, bw)); }, {{"bat", bat}, {"bw", bw}});
    run("linear", [&] { return weighted(linear(bat, w, bias)); },
        {{"bat", bat}, {"w", w}, {"bias", bias}});
    run("transpose", [&] { return weighted(transpose(bat)); }, {{"bat", bat}});
    run("permute", [&] { return weighted(permute(bat, {2, 0, 1})); }, {{"bat", bat}});
    run("reshape", [&] { return weighted(reshape(a, {2, 6})); }, {{"a", a}});
    run("softmax", [&] { return weighted(softmax(bat, 1)); }, {{"bat", bat}});
    run("layer_norm", [&] { return weighted(layer_norm(a, gain, beta)); },
        {{"a", a}, {"gain", gain}, {"beta", beta}});
    run("gelu", [&] { return weighted(gelu(a)); }, {{"a", a}});
    run("relu", [&] { return weighted(relu(a)); }, {{"a", a}});
    run("sigmoid", [&] { return weighted(sigmoid(a)); }, {{"a", a}});
    run("mean", [&] { return mean(mul(a, probe)); }, {{"a", a}});
    run("mean_over", [&] { return weighted(mean_over(bat, 1)); }, {{"bat", bat}});
    run("max_over", [&] { return weighted(max_over(a, 1)); }, {{"a", a}});
    run("concat", [&] { return weighted(concat({a, b}, 1)); }, {{"a", a}, {"b", b}});
    run("slice", [&] { return weighted(slice(a, 1, 1, 2)); }, {{"a", a}});
    run("diagonal", [&] { return weighted(diagonal(sq)); }, {{"sq", sq}});
    run("conv_transpose2d", [&] { return weighted(conv_transpose2d(img, kern, kbias)); },
        {{"img", img}, {"kern", kern}, {"kbias", kbias}});
    run("l2_normalize", [&] { return weighted(l2_normalize(a)); }, {{"a", a}});
    run("bce_with_logits", [&] { return bce_with_logits(scale(a, 3.0), target); }, {{"a", a}});
    run("cross_entropy", [&] { return cross_entropy_with_logits(scale(a, 2.0), {3, 0, 2}); }, {{"a", a}});
    run("attention", [&] { return weighted(attn(queries, keys, keys)); }, attn_params);
    return out;
}

RunConfig gradcheck_model_config(std::uint64_t seed) {
    RunConfig cfg;
    cfg.encoder.image_size = 8;
    cfg.encoder.patch_size = 1;  // 8x8 feature grid, 32x32 mask
    cfg.encoder.d_v = 8;
    cfg.encoder.n_layers = 1;
    cfg.encoder.n_heads = 2;
    cfg.encoder.mlp_ratio = 2;
    cfg.encoder.adapter_dim = 2;
    cfg.encoder.adapters_enabled = true;
    cfg.encoder.d_m = 4;
    cfg.encoder.audio_hidden = 6;
    cfg.sap.cue_hidden = 6;
    cfg.decoder.n_layers = 1;
    cfg.decoder.n_heads = 2;
    cfg.decoder.mlp_dim = 12;
    cfg.decoder.cola_rank = 2;
    cfg.decoder.attn_adapter_rank = 2;
    cfg.decoder.strategy = TuningStrategy::ColAPlusAVVA;
    cfg.decoder.feedback_enabled = true;
    cfg.data.image_size = 8;
    cfg.data.num_classes = 4;
    cfg.train.lambda = 0.5;
    cfg.train.batch_size = 3;
    cfg.train.seed = seed;
    cfg.train.pretrain = false;
    return cfg;
}

GradcheckCaseResult gradcheck_full_loss(std::uint64_t seed) {
    const RunConfig cfg = gradcheck_model_config(seed);
    GavsModel model(cfg, cfg.data.audio_dim());
    // Zero-initialized up-projections would hide the adapter paths; give every
    // parameter a random value instead.
    std::mt19937_64 rng(derive_seed(seed, "gradcheck-model"));
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    for (Parameter& p : model.params().all()) {
        for (double& v : p.tensor.mutable_data()) v = dist(rng);
        if (p.name.ends_with(".g")) {
            for (double& v : p.tensor.mutable_data()) v += 1.0;  // layer-norm gains near 1
        }
    }
    const std::size_t b = cfg.train.batch_size;
    const std::size_t s = cfg.encoder.image_size;
    const std::size_t m = 4 * cfg.encoder.grid();
    Batch batch;
    batch.frames = random_leaf({b, 3, s, s}, rng, 0.0, 1.0);
    batch.frames.set_requires_grad(false);
    batch.audio = random_leaf({b, cfg.data.audio_dim()}, rng);
    batch.audio.set_requires_grad(false);
    std::vector<double> mask(b * m * m);
    for (double& v : mask) v = dist(rng) > 0 ? 1.0 : 0.0;
    batch.masks = Tensor::from({b, m, m}, std::move(mask));

    std::vector<Parameter> params = model.params().all();
    return timed("full_loss", [&] { return loss_summands(model, batch); }, params);
}

std::vector<GradcheckCaseResult> run_gradcheck_suite(std::uint64_t seed) {
    auto out = gradcheck_ops(seed);
    out.push_back(gradcheck_full_loss(seed));
    return out;
}

}  // namespace gavs
