// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gavs/evaluation.hpp"
#include "gavs/gradcheck_suite.hpp"
#include "gavs/losses.hpp"
#include "gavs/random.hpp"
#include "json.hpp"
#include "oracles.hpp"

using namespace gavs;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

void progress(const std::string& msg) { std::cout << "  .. " << msg << std::endl; }

// Gains sit near 1 and bottleneck biases are shifted positive so no ReLU
// bottleneck is dead on every input (which would zero a whole tensor's grad).
void randomize_params(GavsModel& model, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (Parameter& p : model.params().all()) {
        const double shift = p.name.ends_with(".g") || p.name.ends_with(".down.b") ? 1.0 : 0.0;
        for (double& v : p.tensor.mutable_data()) v = u(rng) + shift;
    }
}

Batch random_batch(const RunConfig& cfg, std::size_t b, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    const std::size_t s = cfg.encoder.image_size;
    const std::size_t m = 4 * cfg.encoder.grid();
    std::vector<double> frames(b * 3 * s * s), audio(b * cfg.data.audio_dim()), masks(b * m * m);
    for (double& v : frames) v = u(rng);
    for (double& v : audio) v = n(rng);
    for (double& v : masks) v = u(rng) < 0.3 ? 1.0 : 0.0;
    Batch batch;
    batch.frames = Tensor::from({b, 3, s, s}, std::move(frames));
    batch.audio = Tensor::from({b, cfg.data.audio_dim()}, std::move(audio));
    batch.masks = Tensor::from({b, m, m}, std::move(masks));
    return batch;
}

std::map<std::string, std::vector<double>> grads_of(GavsModel& model, const Tensor& loss) {
    model.params().zero_grad();
    loss.backward();
    std::map<std::string, std::vector<double>> out;
    for (Parameter& p : model.params().all()) {
        if (p.tensor.has_grad()) out[p.name].assign(p.tensor.grad().begin(), p.tensor.grad().end());
        else out[p.name].assign(p.tensor.numel(), 0.0);
    }
    return out;
}

// 1 ------------------------------------------------------------------------
Verdict gradient_suite() {
    const auto t0 = Clock::now();
    auto results = run_gradcheck_suite(7);
    const double elapsed = seconds_since(t0);
    double worst = 0.0;
    std::string worst_name;
    bool all = true;
    for (const auto& r : results) {
        all = all && r.passed;
        if (r.report.max_rel_error >= worst) {
            worst = r.report.max_rel_error;
            worst_name = r.name;
        }
    }
    const auto& full = results.back();
    return {all && full.name == "full_loss" && elapsed < 120.0,
            std::to_string(results.size() - 1) + " ops + full loss (" +
                std::to_string(full.report.coordinates) + " coords, max rel " +
                fmt("%.2e", full.report.max_rel_error) + "); worst overall " + fmt("%.2e", worst) + " (" +
                worst_name + "); " + fmt("%.1f", elapsed) + " s"};
}

// 2 ------------------------------------------------------------------------
Verdict metric_oracles() {
    int mismatches = 0;
    std::mt19937_64 rng(20240601);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<BinaryMask> pred, gt;
        std::vector<ProbabilityMap> maps;
        std::vector<BBox> boxes;
        for (int s = 0; s < 1 + trial % 4; ++s) {
            pred.push_back(oracle::random_mask(rng));
            gt.push_back(oracle::random_mask(rng));
            maps.push_back(oracle::random_map(rng));
            boxes.push_back(oracle::random_box(rng));
        }
        mismatches += miou(pred, gt) != oracle::miou(pred, gt);
        mismatches += fscore(pred, gt, 0.3) != oracle::fscore(pred, gt, 0.3);
        for (const auto& m : pred) {
            auto a = mask_to_bbox(m);
            auto b = oracle::bbox(m);
            mismatches += a.has_value() != b.has_value() || (a && !(*a == *b));
        }
        LocalizationScore loc = ciou_auc(maps, boxes, 0.5);
        oracle::Localization ref = oracle::ciou_auc(maps, boxes, 0.5);
        mismatches += loc.ciou != ref.ciou;
        mismatches += loc.auc != ref.auc;
    }
    BinaryMask hp{2, 2, {1, 1, 0, 0}};
    BinaryMask hg{2, 2, {0, 1, 0, 1}};
    const bool hand = mask_iou(hp, hg) == 1.0 / 3.0 && miou({hp}, {hg}) == 1.0 / 3.0;
    return {mismatches == 0 && hand,
            std::to_string(mismatches) + " mismatches over 100 cases; hand IoU " + fmt("%.17g", mask_iou(hp, hg))};
}

// 3 ------------------------------------------------------------------------
Verdict loss_analytics() {
    std::mt19937_64 rng(3);
    std::vector<double> gt(2 * 16 * 16);
    for (double& v : gt) v = rng() % 2;
    const double bce0 = seg_loss(Tensor::zeros({2, 16, 16}), Tensor::from({2, 16, 16}, gt)).item();
    const bool bce_ok = std::abs(bce0 - std::log(2.0)) <= 1e-9;

    const double m = 0.5;
    Tensor same = Tensor::from({4, 3}, {0.3, -1, 2, 0.3, -1, 2, 0.3, -1, 2, 0.3, -1, 2});
    const double degenerate = semantic_loss(same, same, m).item();
    Tensor sep = Tensor::from({2, 2}, {1, 0, -1, 0});
    const double separated = semantic_loss(sep, sep, m).item();
    const bool triplet_ok = std::abs(degenerate - m) <= 1e-12 && separated == 0.0;

    RunConfig cfg = gradcheck_model_config(3);
    cfg.train.lambda = 0.37;
    GavsModel model(cfg, cfg.data.audio_dim());
    randomize_params(model, 33);
    model.params().set_all_trainable(true);
    Batch batch = random_batch(cfg, 4, rng);
    const auto g_seg = grads_of(model, compute_loss(model, batch).seg);
    const auto g_sem = grads_of(model, compute_loss(model, batch).sem);
    const auto g_tot = grads_of(model, compute_loss(model, batch).total);
    double worst = 0.0;
    for (const auto& [name, g] : g_tot) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            worst = std::max(worst, std::abs(g[i] - (g_seg.at(name)[i] + cfg.train.lambda * g_sem.at(name)[i])));
        }
    }
    return {bce_ok && triplet_ok && worst <= 1e-10,
            "BCE(0) - ln2 = " + fmt("%.1e", bce0 - std::log(2.0)) + "; triplet identical " +
                fmt("%.17g", degenerate) + ", separated " + fmt("%.17g", separated) +
                "; max |g - (g_seg + l g_sem)| " + fmt("%.1e", worst)};
}

// 4 ------------------------------------------------------------------------
Verdict adapter_identity() {
    RunConfig with;
    with.encoder.adapters_enabled = true;
    with.decoder.strategy = TuningStrategy::ColAPlusAVVA;
    RunConfig without = with;
    without.encoder.adapters_enabled = false;
    without.decoder.strategy = TuningStrategy::Freeze;
    GavsModel a(with, with.data.audio_dim());
    GavsModel b(without, without.data.audio_dim());
    GavsModel toggled(with, with.data.audio_dim());
    toggled.set_strategy(TuningStrategy::Freeze);

    std::mt19937_64 rng(4);
    int identical_build = 0, identical_toggle = 0;
    for (int i = 0; i < 10; ++i) {
        Batch batch = random_batch(with, 2, rng);
        ModelOutputs oa = a.forward(batch.frames, batch.audio);
        ModelOutputs ob = b.forward(batch.frames, batch.audio);
        ModelOutputs ot = toggled.forward(batch.frames, batch.audio);
        auto same = [](const Tensor& x, const Tensor& y) {
            return std::equal(x.data().begin(), x.data().end(), y.data().begin(), y.data().end());
        };
        identical_build += same(oa.mask().logits, ob.mask().logits) && same(oa.visual.field, ob.visual.field) &&
                           same(oa.decoder.mask_embedding, ob.decoder.mask_embedding);
        identical_toggle += same(oa.mask().logits, ot.mask().logits) && same(oa.visual.field, ot.visual.field);
    }
    return {identical_build == 10 && identical_toggle == 10,
            std::to_string(identical_build) + "/10 bit-identical vs adapter-free build, " +
                std::to_string(identical_toggle) + "/10 vs adapters switched off"};
}

// 5 ------------------------------------------------------------------------
bool documented_trainable(const std::string& name, TuningStrategy s) {
    auto has = [&](const char* part) { return name.find(part) != std::string::npos; };
    if (name.rfind("encoder.visual.", 0) == 0) return false;
    if (name.rfind("pretrain.", 0) == 0) return false;
    if (name.rfind("encoder.audio.", 0) == 0 || name.rfind("sap.", 0) == 0 || name.rfind("fusion.", 0) == 0) {
        return true;
    }
    const bool cola = has(".cola.");
    const bool av = has(".av_adapter.");
    const bool va = has(".va_adapter.");
    switch (s) {
        case TuningStrategy::Freeze: return false;
        case TuningStrategy::FineTune: return !cola && !av && !va;
        case TuningStrategy::AVAdapter: return av;
        case TuningStrategy::VAAdapter: return va;
        case TuningStrategy::ColA: return cola;
        case TuningStrategy::ColAPlusAVVA: return cola || av || va;
    }
    return false;
}

Verdict frozen_set() {
    RunConfig base = gradcheck_model_config(5);
    auto cells = ablation_matrix(base);
    std::mt19937_64 rng(5);
    Batch batch = random_batch(base, 4, rng);
    std::string detail;
    bool all = true;
    for (int r = 0; r < 6; ++r) {
        const AblationCell& cell = cells[r];
        GavsModel model(cell.config, cell.config.data.audio_dim());
        randomize_params(model, 50 + r);
        model.apply_tuning();
        std::vector<std::vector<double>> before;
        for (const Parameter& p : model.params().all()) before.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
        Adam opt(AdamConfig{1e-3});
        train_step(model, batch, opt);
        std::size_t changed = 0, expected = 0, wrong = 0;
        for (std::size_t i = 0; i < before.size(); ++i) {
            const Parameter& p = model.params().all()[i];
            const bool moved = !std::equal(before[i].begin(), before[i].end(), p.tensor.data().begin());
            const bool want = documented_trainable(p.name, cell.config.decoder.strategy);
            changed += moved;
            expected += want;
            if (moved != want || p.trainable != want) {
                ++wrong;
                if (wrong <= 3) detail += " [" + cell.row + ": " + p.name + (moved ? " moved" : " still") + "]";
            }
        }
        all = all && wrong == 0 && model.prefix_frozen();
        detail += " " + cell.row + "=" + std::to_string(changed) + "/" + std::to_string(expected);
    }
    return {all, "changed/documented tensors per row:" + detail};
}

// 6 ------------------------------------------------------------------------
Verdict end_to_end() {
    const auto t0 = Clock::now();
    RunConfig cfg;
    cfg.data.num_classes = 8;
    cfg.data.image_size = 32;
    cfg.data.num_scenes = 1000;
    cfg.split.num_unseen = 0;
    cfg.split.seen_test = 200;
    cfg.train.steps = 2000;
    cfg.decoder.fusion = FusionMode::AudioPrompt;
    cfg.decoder.strategy = TuningStrategy::ColA;
    cfg.sap.enabled = true;
    Dataset ds = generate_synthetic_dataset(cfg.data, 4 * cfg.encoder.grid());
    SplitSpec split = make_fewshot_split(ds, cfg.split);
    GavsModel model(cfg, ds.config.audio_dim());
    pretrain_foundation(model);
    progress("foundation done at " + fmt("%.0f", seconds_since(t0)) + " s");
    train_gavs(model, ds, indices_of(ds, split.train));
    const auto test = indices_of(ds, split.seen_test);
    const double miou = evaluate(model, ds, test).report.miou;
    const double elapsed = seconds_since(t0);
    EvalOptions shuffled;
    shuffled.shuffle_audio = true;
    const double miou_shuffled = evaluate(model, ds, test, shuffled).report.miou;
    const bool learned = miou >= 0.70;
    const bool audio_dependent = miou - miou_shuffled >= 0.15;
    const bool fast = elapsed < 600.0;
    return {learned && audio_dependent && fast,
            std::to_string(split.train.size()) + " train scenes: seen mIoU " + fmt("%.4f", miou) + " (>= 0.70 " +
                (learned ? "yes" : "no") + "), shuffled audio " + fmt("%.4f", miou_shuffled) + ", drop " +
                fmt("%.4f", miou - miou_shuffled) + " (>= 0.15 " + (audio_dependent ? "yes" : "no") + "), " +
                fmt("%.0f", elapsed) + " s (< 600 " + (fast ? "yes" : "no") + ")"};
}

// 7-9 share one foundation per seed --------------------------------------
struct SeedRuns {
    double prompt_unseen = 0;   // AudioPrompt + ColA + SAP, 0-shot
    double fusion_unseen = 0;   // AVFusion, 0-shot
    double cola_seen = 0;       // same as the prompt run, seen-class test
    double freeze_seen = 0;
    double cola_unseen = 0;
    double freeze_unseen = 0;
    std::map<std::size_t, double> shots_unseen;
};

std::map<std::uint64_t, SeedRuns> g_seed_runs;

const SeedRuns& seed_runs(std::uint64_t seed) {
    if (auto it = g_seed_runs.find(seed); it != g_seed_runs.end()) return it->second;
    const auto t0 = Clock::now();
    RunConfig base;
    base.data.seed = seed;
    base.split.seed = seed;
    base.train.seed = seed;
    base.split.num_unseen = 2;
    Dataset ds = generate_synthetic_dataset(base.data, 4 * base.encoder.grid());
    GavsModel donor(base, ds.config.audio_dim());
    pretrain_foundation(donor);
    const ParameterSnapshot foundation = snapshot_foundation(donor);
    progress("seed " + std::to_string(seed) + " foundation " + fmt("%.0f", seconds_since(t0)) + " s");

    auto run = [&](RunConfig cfg, const std::string& name) {
        SplitSpec split = make_fewshot_split(ds, cfg.split);
        GavsModel model(cfg, ds.config.audio_dim());
        load_foundation(model, foundation);
        train_gavs(model, ds, indices_of(ds, split.train));
        const double unseen = evaluate(model, ds, indices_of(ds, split.test)).report.miou;
        const double seen = evaluate(model, ds, indices_of(ds, split.seen_test)).report.miou;
        progress("seed " + std::to_string(seed) + " " + name + ": unseen " + fmt("%.4f", unseen) + ", seen " +
                 fmt("%.4f", seen) + " (" + std::to_string(split.train.size()) + " train, " +
                 std::to_string(split.test.size()) + " test) " + fmt("%.0f", seconds_since(t0)) + " s");
        return std::make_pair(unseen, seen);
    };

    SeedRuns r;
    auto [pu, ps] = run(base, "audio-prompt 0-shot");
    r.prompt_unseen = r.cola_unseen = pu;
    r.cola_seen = ps;
    r.shots_unseen[0] = pu;
    RunConfig fusion = base;
    fusion.decoder.fusion = FusionMode::AVFusion;
    r.fusion_unseen = run(fusion, "av-fusion 0-shot").first;
    RunConfig freeze = base;
    freeze.decoder.strategy = TuningStrategy::Freeze;
    std::tie(r.freeze_unseen, r.freeze_seen) = run(freeze, "freeze");
    for (std::size_t shots : {1, 3, 5}) {
        RunConfig k = base;
        k.split.shots = shots;
        r.shots_unseen[shots] = run(k, std::to_string(shots) + "-shot").first;
    }
    return g_seed_runs[seed] = r;
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3};

Verdict prompt_beats_fusion() {
    int wins = 0;
    std::string detail;
    for (std::uint64_t s : kSeeds) {
        const SeedRuns& r = seed_runs(s);
        wins += r.prompt_unseen > r.fusion_unseen;
        detail += " seed " + std::to_string(s) + ": " + fmt("%.4f", r.prompt_unseen) + " vs " +
                  fmt("%.4f", r.fusion_unseen) + ";";
    }
    return {wins >= 2, std::to_string(wins) + "/3 seeds audio-prompt > av-fusion (unseen 0-shot mIoU):" + detail};
}

Verdict cola_beats_freeze() {
    int wins = 0;
    std::string detail;
    for (std::uint64_t s : kSeeds) {
        const SeedRuns& r = seed_runs(s);
        wins += r.cola_seen > r.freeze_seen;
        detail += " seed " + std::to_string(s) + ": " + fmt("%.4f", r.cola_seen) + " vs " + fmt("%.4f", r.freeze_seen) +
                  " (unseen " + fmt("%.4f", r.cola_unseen) + " vs " + fmt("%.4f", r.freeze_unseen) + ");";
    }
    return {wins >= 2, std::to_string(wins) + "/3 seeds ColA > freeze (seen-class test mIoU):" + detail};
}

Verdict fewshot_monotone() {
    std::map<std::size_t, double> mean;
    for (std::uint64_t s : kSeeds) {
        for (const auto& [k, v] : seed_runs(s).shots_unseen) mean[k] += v / kSeeds.size();
    }
    bool ok = true;
    double prev = -1.0;
    std::string detail;
    for (const auto& [k, v] : mean) {
        ok = ok && v >= prev;
        prev = v;
        detail += " " + std::to_string(k) + "-shot " + fmt("%.4f", v);
    }
    return {ok, "mean unseen mIoU over 3 seeds:" + detail};
}

// 10 -----------------------------------------------------------------------
int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = "\"" GAVS_CLI_PATH "\" " + args + " >>\"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file() || e.path().filename() == "log.txt") continue;
        std::ifstream in(e.path(), std::ios::binary);
        out[fs::relative(e.path(), root).string()] = {std::istreambuf_iterator<char>(in), {}};
    }
    return out;
}

Verdict determinism() {
    const fs::path root = fs::temp_directory_path() / "gavs_acceptance_replay";
    fs::remove_all(root);
    fs::create_directories(root);
    nlohmann::json cfg = {{"data", {{"num_scenes", 200}}},
                          {"split", {{"seen_test", 30}}},
                          {"train", {{"steps", 60}, {"pretrain_scenes", 60}, {"backbone_pretrain_steps", 20},
                                     {"decoder_pretrain_steps", 20}}}};
    std::ofstream(root / "cfg.json") << cfg.dump(2);
    const std::string c = " -c \"" + (root / "cfg.json").string() + "\" --seed 11";
    int failures = 0;
    for (const char* name : {"a", "b"}) {
        const fs::path d = root / name;
        fs::create_directories(d);
        const fs::path log = d / "log.txt";
        auto q = [&](const char* f) { return "\"" + (d / f).string() + "\""; };
        failures += run_cli("gen-data" + c + " -o " + q("data"), log) != 0;
        failures += run_cli("split" + c + " -d " + q("data") + " -o " + q("split.json"), log) != 0;
        failures += run_cli("train" + c + " -d " + q("data") + " -s " + q("split.json") + " -o " + q("model.ckpt") +
                                " --loss-log " + q("loss.csv"),
                            log) != 0;
        failures += run_cli("eval" + c + " -d " + q("data") + " -s " + q("split.json") + " --checkpoint " +
                                q("model.ckpt") + " -o " + q("report.json") + " --masks " + q("masks"),
                            log) != 0;
    }
    const auto ta = tree(root / "a");
    const auto tb = tree(root / "b");
    std::size_t differing = 0;
    for (const auto& [k, v] : ta) differing += !tb.count(k) || tb.at(k) != v;
    differing += ta.size() != tb.size();
    const bool have_all = ta.count("loss.csv") && ta.count("report.json") && ta.count("data/manifest.json");
    if (failures == 0) fs::remove_all(root);
    return {failures == 0 && have_all && differing == 0,
            std::to_string(ta.size()) + " files per pipeline (dataset, split, checkpoint, loss log, report, masks), " +
                std::to_string(differing) + " differ, " + std::to_string(failures) + " failed commands"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
        {"gradient suite (ops + full loss, rel err <= 1e-4, < 2 min)", gradient_suite},
        {"metric oracles (100 random 8x8 cases, exact; hand IoU 1/3)", metric_oracles},
        {"loss analytics (BCE ln2, triplet m and 0, gradient linearity)", loss_analytics},
        {"adapter identity (zero-init adapters bit-identical, 10 inputs)", adapter_identity},
        {"frozen-set contract (rows a-f, bitwise audit)", frozen_set},
        {"end-to-end learning (seen mIoU >= 0.70, audio shuffle drop >= 0.15, < 10 min)", end_to_end},
        {"zero-shot ordering: audio-prompt > av-fusion in >= 2/3 seeds", prompt_beats_fusion},
        {"tuning ordering: ColA > freeze in >= 2/3 seeds", cola_beats_freeze},
        {"few-shot monotonicity over 0/1/3/5 shots", fewshot_monotone},
        {"determinism (two CLI pipelines byte-identical)", determinism},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!selected.empty() && !selected.count(id)) continue;
        const auto t0 = Clock::now();
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failed += !v.pass;
        std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << criteria[i].first << " -- "
                  << v.detail << " [" << fmt("%.1f", seconds_since(t0)) << " s]" << std::endl;
    }
    std::cout << (failed == 0 ? "all selected criteria passed" : std::to_string(failed) + " criteria failed")
              << std::endl;
    return failed == 0 ? 0 : 1;
}
