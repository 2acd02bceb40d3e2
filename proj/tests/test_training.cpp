#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>

#include "gavs/errors.hpp"
#include "gavs/losses.hpp"
#include "gavs/split.hpp"
#include "gavs/trainer.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gavs;
using gavs::testing::random_tensor;
using gavs::testing::to_vector;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config() {
    RunConfig c;
    c.encoder.image_size = 16;
    c.encoder.patch_size = 2;
    c.encoder.d_v = 16;
    c.encoder.n_layers = 1;
    c.encoder.n_heads = 2;
    c.encoder.d_m = 8;
    c.encoder.audio_hidden = 16;
    c.sap.cue_hidden = 8;
    c.decoder.n_layers = 1;
    c.decoder.n_heads = 2;
    c.decoder.mlp_dim = 32;
    c.decoder.cola_rank = 4;
    c.decoder.attn_adapter_rank = 4;
    c.data.image_size = 16;
    c.data.num_classes = 4;
    c.data.num_scenes = 60;
    c.split.num_unseen = 0;
    c.split.seen_test = 10;
    c.train.batch_size = 4;
    c.train.steps = 5;
    c.train.pretrain = false;
    return c;
}

Batch batch_of(const Dataset& ds, std::size_t from, std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = from + i;
    return make_batch(ds, idx, nullptr);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
    }
    return out;
}

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("gavs_test_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("segmentation loss") {
    Tensor zero = Tensor::zeros({2, 3, 3});
    std::mt19937_64 rng(1);
    std::vector<double> gt(18);
    for (double& v : gt) v = rng() % 2;
    CHECK(std::abs(seg_loss(zero, Tensor::from({2, 3, 3}, gt)).item() - std::log(2.0)) < 1e-9);

    Tensor confident = Tensor::from({1, 2}, {40.0, -40.0});
    CHECK(seg_loss(confident, Tensor::from({1, 2}, {1.0, 0.0})).item() < 1e-15);

    Tensor logits = random_tensor({1, 4, 4}, rng, -3, 3);
    std::vector<double> target(16);
    for (double& v : target) v = rng() % 2;
    CHECK(seg_loss(logits, Tensor::from({1, 4, 4}, target)).item() ==
          doctest::Approx(oracle::bce(to_vector(logits), target)).epsilon(1e-10));
    CHECK_THROWS_AS(seg_loss(logits, Tensor::zeros({1, 4, 5})), ShapeError);
}

TEST_CASE("clip feature averaging") {
    std::mt19937_64 rng(2);
    Tensor v1 = random_tensor({2, 1, 4}, rng);
    Tensor a1 = random_tensor({2, 1, 3}, rng);
    ClipFeatures one = average_features(v1, a1);
    CHECK(to_vector(one.visual) == to_vector(v1));
    CHECK(to_vector(one.audio) == to_vector(a1));

    Tensor x = random_tensor({1, 1, 4}, rng);
    ClipFeatures cancel = average_features(concat({x, scale(x, -1.0)}, 1), concat({x, scale(x, -1.0)}, 1));
    CHECK(to_vector(cancel.visual) == std::vector<double>(4, 0.0));

    Tensor v3 = random_tensor({2, 3, 4}, rng);
    const auto got = to_vector(average_features(v3, random_tensor({2, 3, 2}, rng)).visual);
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t k = 0; k < 4; ++k) {
            const double want = (v3.at({n, 0, k}) + v3.at({n, 1, k}) + v3.at({n, 2, k})) / 3.0;
            CHECK(got[n * 4 + k] == doctest::Approx(want).epsilon(1e-14));
        }
    CHECK_THROWS_AS(average_features(v3, random_tensor({2, 2, 2}, rng)), ShapeError);
}

TEST_CASE("semantic triplet loss") {
    const double m = 0.5;
    SUBCASE("identical embeddings give the margin") {
        Tensor e = Tensor::from({3, 2}, {1, 2, 1, 2, 1, 2});
        CHECK(semantic_loss(e, e, m).item() == doctest::Approx(m).epsilon(1e-15));
    }
    SUBCASE("well separated pairs give zero") {
        // sim(v_i, a_i) = 1 and every cross similarity is -1.
        Tensor v = Tensor::from({2, 2}, {1, 0, -1, 0});
        CHECK(semantic_loss(v, v, m).item() == 0.0);
    }
    SUBCASE("random triplets match a pairwise oracle") {
        std::mt19937_64 rng(3);
        Tensor v = random_tensor({3, 5}, rng);
        Tensor a = random_tensor({3, 5}, rng);
        std::vector<std::vector<double>> vv(3), aa(3);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t k = 0; k < 5; ++k) {
                vv[i].push_back(v.at({i, k}));
                aa[i].push_back(a.at({i, k}));
            }
        CHECK(std::abs(semantic_loss(v, a, m).item() - oracle::triplet(vv, aa, m)) < 1e-10);
        const double sym = 0.5 * (oracle::triplet(vv, aa, m) + oracle::triplet(aa, vv, m));
        CHECK(std::abs(semantic_loss(v, a, m, true).item() - sym) < 1e-10);
    }
    SUBCASE("single-item batches contribute nothing") {
        Tensor v = Tensor::from({1, 2}, {1, 2});
        CHECK(semantic_loss(v, v, m).item() == 0.0);
    }
}

TEST_CASE("total loss weighting and gradient linearity") {
    CHECK(total_loss(Tensor::scalar(0.7), Tensor::scalar(0.2), 0.5).item() == doctest::Approx(0.8));
    Tensor seg = Tensor::scalar(0.3);
    CHECK(total_loss(seg, Tensor::scalar(0.9), 0.0).item() == seg.item());
    CHECK_THROWS_AS(total_loss(seg, seg, -0.1), ContractError);

    std::mt19937_64 rng(4);
    Tensor w = random_tensor({3, 3}, rng, -1, 1, true);
    Tensor x = random_tensor({3, 3}, rng);
    Tensor target = Tensor::from({3, 3}, {1, 0, 1, 0, 0, 1, 1, 1, 0});
    auto seg_of = [&] { return seg_loss(matmul(x, w), target); };
    auto sem_of = [&] { return semantic_loss(matmul(x, w), x, 0.5); };
    const double lambda = 0.37;
    auto grad = [&](const Tensor& loss) {
        w.zero_grad();
        loss.backward();
        return std::vector<double>(w.grad().begin(), w.grad().end());
    };
    const auto gs = grad(seg_of());
    const auto gm = grad(sem_of());
    const auto gt = grad(total_loss(seg_of(), sem_of(), lambda));
    for (std::size_t i = 0; i < gt.size(); ++i) CHECK(std::abs(gt[i] - (gs[i] + lambda * gm[i])) < 1e-10);
}

TEST_CASE("loss summands add up to the loss") {
    RunConfig cfg = tiny_config();
    cfg.train.lambda = 0.4;
    cfg.train.symmetric_triplet = true;
    Dataset ds = generate_synthetic_dataset(cfg.data, 4 * cfg.encoder.grid());
    GavsModel model(cfg, ds.config.audio_dim());
    Batch b = batch_of(ds, 0, 4);
    const double total = compute_loss(model, b).total.item();
    CHECK(sum(loss_summands(model, b)).item() == doctest::Approx(total).epsilon(1e-13));
}

TEST_CASE("synthetic scenes") {
    DataConfig dc = tiny_config().data;
    dc.sigma = 0.0;
    dc.num_scenes = 40;
    Dataset ds = generate_synthetic_dataset(dc, 32);
    REQUIRE(ds.scenes.size() == 40);
    bool saw_single = false;
    for (const SceneSample& s : ds.scenes) {
        std::vector<double> want(dc.audio_dim(), 0.0);
        for (int c : s.sounding_classes()) want[c] += dc.gamma;
        CHECK(s.audio == want);
        if (s.objects.size() == 1) {
            saw_single = true;
            CHECK(s.mask == object_footprint(s.objects[0], s.image_size, s.mask_size));
        }
        CHECK_FALSE(s.sounding_classes().empty());
    }
    CHECK(saw_single);

    DataConfig bad = dc;
    bad.num_classes = 25;
    CHECK_THROWS_AS(generate_synthetic_dataset(bad, 32), ConfigError);
}

TEST_CASE("dataset directories are byte-identical across runs and round-trip") {
    DataConfig dc = tiny_config().data;
    dc.num_scenes = 12;
    const fs::path a = scratch("ds_a"), b = scratch("ds_b");
    write_dataset(generate_synthetic_dataset(dc, 32), a);
    write_dataset(generate_synthetic_dataset(dc, 32), b);
    CHECK(tree(a) == tree(b));

    Dataset back = load_dataset(a);
    Dataset fresh = generate_synthetic_dataset(dc, 32);
    REQUIRE(back.scenes.size() == fresh.scenes.size());
    for (std::size_t i = 0; i < back.scenes.size(); ++i) {
        CHECK(back.scenes[i].frame == fresh.scenes[i].frame);
        CHECK(back.scenes[i].mask == fresh.scenes[i].mask);
        CHECK(back.scenes[i].audio == fresh.scenes[i].audio);
        CHECK(back.scenes[i].sounding_classes() == fresh.scenes[i].sounding_classes());
    }
    fs::remove_all(a);
    fs::remove_all(b);
}

namespace {

SceneSample stub_scene(const std::string& id, std::vector<std::pair<int, bool>> objects) {
    SceneSample s;
    s.id = id;
    for (auto [cls, sounding] : objects) s.objects.push_back(SceneObject{cls, 0, 0, 1, sounding});
    return s;
}

}  // namespace

TEST_CASE("few-shot split counting") {
    Dataset ds;
    ds.config.num_classes = 4;
    for (int i = 0; i < 30; ++i) ds.scenes.push_back(stub_scene("s" + std::to_string(i), {{i % 3, true}}));
    for (int i = 0; i < 20; ++i) ds.scenes.push_back(stub_scene("u" + std::to_string(i), {{3, true}}));
    SplitConfig sc;
    sc.unseen_classes = {3};
    sc.seen_test = 0;
    sc.shots = 5;
    SplitSpec sp = make_fewshot_split(ds, sc);
    CHECK(sp.train.size() == 35);
    CHECK(sp.test.size() == 15);
    CHECK(sp.shot_ids.size() == 5);

    sc.shots = 0;
    SplitSpec zero = make_fewshot_split(ds, sc);
    for (const std::string& id : zero.train) CHECK(id[0] == 's');

    sc.shots = 1;
    SplitSpec one = make_fewshot_split(ds, sc);
    sc.shots = 3;
    SplitSpec three = make_fewshot_split(ds, sc);
    CHECK(std::equal(one.shot_ids.begin(), one.shot_ids.end(), three.shot_ids.begin()));
    CHECK(std::equal(three.shot_ids.begin(), three.shot_ids.end(), sp.shot_ids.begin()));

    sc.shots = 5;
    ds.scenes.resize(35);  // only 5 scenes of the unseen class left
    CHECK_THROWS_AS(make_fewshot_split(ds, sc), ConfigError);
}

TEST_CASE("split manifests never overlap") {
    DataConfig dc = tiny_config().data;
    dc.num_classes = 6;
    dc.num_scenes = 150;
    Dataset ds = generate_synthetic_dataset(dc, 32);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        for (std::size_t shots : {0, 1, 3, 5}) {
            SplitConfig sc;
            sc.num_unseen = 2;
            sc.seen_test = 10;
            sc.shots = shots;
            sc.seed = seed;
            SplitSpec sp = make_fewshot_split(ds, sc);
            std::set<std::string> train(sp.train.begin(), sp.train.end());
            for (const std::string& id : sp.test) CHECK(train.count(id) == 0);
            for (const std::string& id : sp.seen_test) CHECK(train.count(id) == 0);
            CHECK(train.size() + sp.test.size() + sp.seen_test.size() == ds.scenes.size());
            if (shots == 0) {
                const std::set<int> unseen(sp.unseen_classes.begin(), sp.unseen_classes.end());
                for (std::size_t i : indices_of(ds, sp.train))
                    for (int c : ds.scenes[i].all_classes()) CHECK(unseen.count(c) == 0);
            }
        }
    }
    SplitConfig sc;
    sc.seed = 3;
    sc.shots = 1;
    sc.seen_test = 10;
    const fs::path p = scratch("split.json");
    write_split(make_fewshot_split(ds, sc), p);
    SplitSpec back = load_split(p);
    CHECK(back.train == make_fewshot_split(ds, sc).train);
    fs::remove(p);
}

TEST_CASE("optimizer step contracts") {
    RunConfig cfg = tiny_config();
    Dataset ds = generate_synthetic_dataset(cfg.data, 4 * cfg.encoder.grid());
    Batch b = batch_of(ds, 0, 4);

    SUBCASE("zero learning rate leaves parameters unchanged") {
        GavsModel model(cfg, ds.config.audio_dim());
        model.apply_tuning();
        std::vector<std::vector<double>> before;
        for (const Parameter& p : model.params().all()) before.push_back(to_vector(p.tensor));
        Adam opt(AdamConfig{0.0});
        train_step(model, b, opt);
        for (std::size_t i = 0; i < before.size(); ++i) CHECK(to_vector(model.params().all()[i].tensor) == before[i]);
    }
    SUBCASE("nothing trainable keeps the loss constant") {
        cfg.decoder.strategy = TuningStrategy::Freeze;
        cfg.sap.enabled = false;
        cfg.train.freeze = {"sap.", "encoder.audio"};
        GavsModel model(cfg, ds.config.audio_dim());
        model.apply_tuning();
        CHECK(model.params().scalar_count(true) == 0);
        Adam opt(AdamConfig{1e-2});
        const double first = train_step(model, b, opt).total;
        for (int i = 0; i < 3; ++i) CHECK(train_step(model, b, opt).total == first);
    }
    SUBCASE("non-finite values are reported by name") {
        GavsModel model(cfg, ds.config.audio_dim());
        model.apply_tuning();
        model.params().get("encoder.audio.fc1.w").tensor.mutable_data()[0] = std::nan("");
        Adam opt;
        try {
            train_step(model, b, opt);
            FAIL("expected NumericError");
        } catch (const NumericError& e) {
            CHECK(std::string(e.what()).find("encoder.audio.fc1.w") != std::string::npos);
        }
    }
}

TEST_CASE("training reduces the loss on a small task") {
    RunConfig cfg = tiny_config();
    cfg.data.num_scenes = 80;
    cfg.decoder.strategy = TuningStrategy::FineTune;
    cfg.train.steps = 200;
    cfg.train.lr = 3e-3;
    Dataset ds = generate_synthetic_dataset(cfg.data, 4 * cfg.encoder.grid());
    std::vector<std::size_t> idx(ds.scenes.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    GavsModel model(cfg, ds.config.audio_dim());
    auto log = train_gavs(model, ds, idx);
    REQUIRE(log.size() == 200);
    double tail = 0.0;
    for (std::size_t i = 180; i < 200; ++i) tail += log[i].total / 20.0;
    CHECK(tail <= 0.5 * log.front().total);
}

TEST_CASE("training replays bit-identically") {
    RunConfig cfg = tiny_config();
    cfg.decoder.feedback_enabled = true;
    cfg.train.steps = 6;
    Dataset ds = generate_synthetic_dataset(cfg.data, 4 * cfg.encoder.grid());
    std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    auto run = [&] {
        GavsModel model(cfg, ds.config.audio_dim());
        std::ostringstream csv;
        write_loss_csv(csv, train_gavs(model, ds, idx));
        return csv.str();
    };
    const std::string first = run();
    CHECK(first == run());
    CHECK(first.rfind("phase,step,loss,seg,sem\n", 0) == 0);
}

TEST_CASE("feature cache matches the uncached pass") {
    RunConfig cfg = tiny_config();
    Dataset ds = generate_synthetic_dataset(cfg.data, 4 * cfg.encoder.grid());
    GavsModel model(cfg, ds.config.audio_dim());
    model.apply_tuning();
    REQUIRE(model.prefix_frozen());
    std::vector<std::size_t> idx{3, 1, 4};
    FeatureCache cache(model, ds, idx);
    Batch cached = make_batch(ds, idx, &cache);
    Batch plain = make_batch(ds, idx, nullptr);
    REQUIRE(cached.visual_prefix.defined());
    CHECK(compute_loss(model, cached).total.item() == compute_loss(model, plain).total.item());
}
