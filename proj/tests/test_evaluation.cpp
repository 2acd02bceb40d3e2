#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gavs/checkpoint.hpp"
#include "gavs/errors.hpp"
#include "gavs/evaluation.hpp"
#include "test_util.hpp"

using namespace gavs;
using gavs::testing::random_tensor;
using gavs::testing::to_vector;
namespace fs = std::filesystem;

namespace {

RunConfig toy_config() {
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
    c.split.num_unseen = 1;
    c.split.seen_test = 8;
    c.train.batch_size = 4;
    c.train.steps = 4;
    c.train.pretrain_scenes = 20;
    c.train.backbone_pretrain_steps = 3;
    c.train.decoder_pretrain_steps = 3;
    return c;
}

}  // namespace

TEST_CASE("checkpoint round trip") {
    RunConfig cfg = toy_config();
    cfg.decoder.feedback_enabled = true;
    cfg.train.pretrain = false;
    Dataset ds = generate_synthetic_dataset(cfg.data, 32);
    GavsModel model(cfg, ds.config.audio_dim());
    train_gavs(model, ds, {0, 1, 2, 3, 4, 5});

    const fs::path path = fs::temp_directory_path() / "gavs_test_model.ckpt";
    save_checkpoint(model, path);
    auto back = load_checkpoint(path);
    REQUIRE(back->params().all().size() == model.params().all().size());
    for (std::size_t i = 0; i < model.params().all().size(); ++i) {
        CHECK(back->params().all()[i].name == model.params().all()[i].name);
        CHECK(to_vector(back->params().all()[i].tensor) == to_vector(model.params().all()[i].tensor));
    }
    CHECK(config_hash(back->config()) == config_hash(model.config()));
    std::vector<std::size_t> idx{6, 7, 8};
    CHECK(to_vector(back->forward(stack_frames(ds, idx), stack_audio(ds, idx)).mask().logits) ==
          to_vector(model.forward(stack_frames(ds, idx), stack_audio(ds, idx)).mask().logits));

    std::ifstream in(path, std::ios::binary);
    char magic[8];
    in.read(magic, 8);
    CHECK(std::string(magic, 8) == "GAVSCKPT");

    {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(0);
        f.write("XXXX", 4);
    }
    CHECK_THROWS(load_checkpoint(path));
    save_checkpoint(model, path);
    fs::resize_file(path, fs::file_size(path) - 9);
    CHECK_THROWS(load_checkpoint(path));
    fs::remove(path);
}

TEST_CASE("evaluation is pure and scores perfect predictions as 1") {
    RunConfig cfg = toy_config();
    cfg.train.pretrain = false;
    Dataset ds = generate_synthetic_dataset(cfg.data, 32);
    GavsModel model(cfg, ds.config.audio_dim());
    std::vector<std::size_t> idx{0, 1, 2, 3, 4};
    EvalResult a = evaluate(model, ds, idx);
    EvalResult b = evaluate(model, ds, idx);
    CHECK(report_to_json(a.report).dump() == report_to_json(b.report).dump());
    for (double v : {a.report.miou, a.report.fscore, a.report.ciou, a.report.auc}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    std::vector<ProbabilityMap> perfect;
    for (std::size_t i : idx) {
        const SceneSample& s = ds.scenes[i];
        perfect.push_back({s.mask_size, s.mask_size, std::vector<double>(s.mask.begin(), s.mask.end())});
    }
    MetricReport r = score_predictions(perfect, ds, idx, {});
    CHECK(r.miou == 1.0);
    CHECK(r.fscore == 1.0);
    CHECK(r.samples.size() == idx.size());
}

TEST_CASE("ablation matrix") {
    RunConfig cfg = toy_config();
    Dataset ds = generate_synthetic_dataset(cfg.data, 32);
    SplitSpec split = make_fewshot_split(ds, cfg.split);
    auto cells = ablation_matrix(cfg);
    REQUIRE(cells.size() == 10);
    CHECK(cells[0].config.decoder.strategy == TuningStrategy::Freeze);
    CHECK(cells[4].config.decoder.strategy == TuningStrategy::ColA);
    CHECK(cells[6].config.decoder.fusion == FusionMode::AVFusion);
    CHECK(cells[9].config.sap.enabled);
    CHECK(cells[9].config.encoder.adapters_enabled);

    SUBCASE("full matrix emits ten rows; freeze and ColA start from the same loss") {
        auto rows = run_ablation(cells, ds, split, cfg);
        REQUIRE(rows.size() == 10);
        for (const AblationResult& r : rows) CHECK(r.ok);
        CHECK(rows[0].initial_loss == rows[4].initial_loss);
        std::ostringstream csv;
        write_ablation_csv(csv, rows);
        std::istringstream lines(csv.str());
        std::string line;
        int n = 0;
        while (std::getline(lines, line)) ++n;
        CHECK(n == 11);
    }
    SUBCASE("a one-cell matrix equals a plain train and eval run") {
        auto rows = run_ablation({cells[4]}, ds, split, cfg);
        REQUIRE(rows.size() == 1);
        REQUIRE(rows[0].ok);
        GavsModel model(cells[4].config, ds.config.audio_dim());
        pretrain_foundation(model);
        train_gavs(model, ds, indices_of(ds, split.train));
        MetricReport plain = evaluate(model, ds, indices_of(ds, split.seen_test)).report;
        CHECK(rows[0].report.miou == plain.miou);
        CHECK(rows[0].report.fscore == plain.fscore);
        CHECK(rows[0].report.auc == plain.auc);
    }
    SUBCASE("a failing cell is recorded and the rest continue") {
        std::vector<AblationCell> bad{cells[0], cells[1]};
        bad[0].config.encoder.d_v = 12;
        auto rows = run_ablation(bad, ds, split, cfg);
        REQUIRE(rows.size() == 2);
        CHECK_FALSE(rows[0].ok);
        CHECK_FALSE(rows[0].error.empty());
        CHECK(rows[1].ok);
    }
}
