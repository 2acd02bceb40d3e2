#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gavs/checkpoint.hpp"
#include "gavs/config.hpp"
#include "gavs/dataset.hpp"
#include "gavs/errors.hpp"
#include "gavs/evaluation.hpp"
#include "gavs/gradcheck_suite.hpp"
#include "gavs/split.hpp"
#include "gavs/tensor.hpp"
#include "gavs/trainer.hpp"

namespace fs = std::filesystem;
using namespace gavs;

namespace {

// Options every subcommand understands.
struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_given = false;
    bool check_finite = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("-c,--config", c.config_path, "JSON run config")->check(CLI::ExistingFile);
    cmd->add_option("--set", c.overrides, "Override a config key, e.g. train.steps=500");
    cmd->add_option("--seed", c.seed, "Seed for data, split and training")
        ->each([&c](const std::string&) { c.seed_given = true; });
    cmd->add_flag("--check-finite", c.check_finite, "Abort on NaN/Inf in any tensor op");
}

void set_seeds(RunConfig& cfg, std::uint64_t seed) {
    cfg.data.seed = seed;
    cfg.split.seed = seed;
    cfg.train.seed = seed;
}

// File < GAVS_SEED < flags.
RunConfig resolve_config(const Common& c) {
    RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path);
    if (const char* env = std::getenv("GAVS_SEED"); env != nullptr && *env != '\0') {
        try {
            set_seeds(cfg, std::stoull(env));
        } catch (const std::exception&) {
            throw ConfigError(std::string("GAVS_SEED is not an integer: ") + env);
        }
    }
    for (const std::string& kv : c.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + kv);
        apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (c.seed_given) set_seeds(cfg, c.seed);
    set_check_finite(c.check_finite);
    return cfg;
}

// Dataset parameters always come from the dataset on disk.
RunConfig adopt_dataset(RunConfig cfg, const Dataset& ds) {
    const std::uint64_t seed = cfg.data.seed;
    cfg.data = ds.config;
    cfg.data.seed = seed;
    cfg.validate();
    return cfg;
}

std::vector<std::size_t> subset_indices(const Dataset& ds, const SplitSpec& split,
                                        const std::string& subset) {
    if (subset == "test") return indices_of(ds, split.test);
    if (subset == "seen_test") return indices_of(ds, split.seen_test);
    if (subset == "train") return indices_of(ds, split.train);
    throw ConfigError("unknown subset '" + subset + "' (expected test, seen_test or train)");
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

int cmd_gen_data(const Common& c, const std::string& out_dir) {
    RunConfig cfg = resolve_config(c);
    cfg.validate();
    Dataset ds = generate_synthetic_dataset(cfg.data, 4 * cfg.encoder.grid());
    write_dataset(ds, out_dir);
    std::cout << "wrote " << ds.scenes.size() << " scenes to " << out_dir << "\n";
    return 0;
}

int cmd_split(const Common& c, const std::string& data_dir, const std::string& out) {
    RunConfig cfg = resolve_config(c);
    Dataset ds = load_dataset(data_dir);
    cfg = adopt_dataset(cfg, ds);
    SplitSpec split = make_fewshot_split(ds, cfg.split);
    write_split(split, out);
    std::cout << "train " << split.train.size() << ", test " << split.test.size() << ", seen_test "
              << split.seen_test.size() << "\n";
    return 0;
}

int cmd_train(const Common& c, const std::string& data_dir, const std::string& split_path,
              const std::string& ckpt, const std::string& loss_log) {
    RunConfig cfg = resolve_config(c);
    Dataset ds = load_dataset(data_dir);
    cfg = adopt_dataset(cfg, ds);
    SplitSpec split = load_split(split_path);
    cfg.split.shots = split.shots;
    GavsModel model(cfg, ds.config.audio_dim());
    std::vector<LossRecord> log;
    const LossCallback keep = [&log](const LossRecord& r) { log.push_back(r); };
    if (cfg.train.pretrain) pretrain_foundation(model, keep);
    train_gavs(model, ds, indices_of(ds, split.train), keep);
    if (fs::path(ckpt).has_parent_path()) fs::create_directories(fs::path(ckpt).parent_path());
    save_checkpoint(model, ckpt);
    if (!loss_log.empty()) {
        auto out = open_out(loss_log);
        write_loss_csv(out, log);
    }
    if (!log.empty()) std::cout << "final loss " << log.back().total << "\n";
    return 0;
}

struct EvalArgs {
    std::string data_dir;
    std::string split_path;
    std::string checkpoint;
    std::string predictions;
    std::string out;
    std::string masks_dir;
    std::string subset = "test";
    double beta2 = -1;
    bool shuffle_audio = false;
};

ProbabilityMap read_prediction(const fs::path& path, std::size_t expected) {
    std::size_t w = 0, h = 0;
    const auto gray = read_netpbm(path, "P5", w, h);
    if (w != expected || h != expected) {
        throw ContractError(path.string() + " is " + std::to_string(w) + "x" + std::to_string(h) +
                            ", expected " + std::to_string(expected));
    }
    ProbabilityMap m{h, w, std::vector<double>(gray.size())};
    for (std::size_t i = 0; i < gray.size(); ++i) m.values[i] = gray[i] / 255.0;
    return m;
}

int cmd_eval(const Common& c, const EvalArgs& a) {
    if (a.checkpoint.empty() == a.predictions.empty()) {
        throw ConfigError("eval needs exactly one of --checkpoint or --predictions");
    }
    RunConfig cfg = resolve_config(c);
    Dataset ds = load_dataset(a.data_dir);
    SplitSpec split = load_split(a.split_path);
    const auto idx = subset_indices(ds, split, a.subset);

    EvalOptions opt;
    opt.shuffle_audio = a.shuffle_audio;
    MetricReport report;
    std::vector<BinaryMask> predictions;
    if (!a.checkpoint.empty()) {
        auto model = load_checkpoint(a.checkpoint);
        opt.beta2 = a.beta2 >= 0 ? a.beta2 : model->config().eval.beta2;
        opt.threshold = model->config().eval.threshold;
        EvalResult res = evaluate(*model, ds, idx, opt);
        report = std::move(res.report);
        predictions = std::move(res.predictions);
    } else {
        cfg = adopt_dataset(cfg, ds);
        opt.beta2 = a.beta2 >= 0 ? a.beta2 : cfg.eval.beta2;
        opt.threshold = cfg.eval.threshold;
        std::vector<ProbabilityMap> maps;
        for (std::size_t i : idx) {
            maps.push_back(read_prediction(fs::path(a.predictions) / (ds.scenes[i].id + ".pgm"),
                                           ds.mask_size));
            predictions.push_back(maps.back().binarize(opt.threshold));
        }
        report = score_predictions(maps, ds, idx, opt);
        report.config_hash = config_hash(cfg);
        report.seed = cfg.train.seed;
        report.strategy = to_string(cfg.decoder.strategy);
        report.mode = to_string(cfg.decoder.fusion);
    }
    report.shots = split.shots;
    report.subset = a.subset;
    write_json(a.out, report_to_json(report));
    if (!a.masks_dir.empty()) {
        fs::create_directories(a.masks_dir);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            std::vector<std::uint8_t> gray(predictions[k].pixels.size());
            for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = predictions[k].pixels[i] ? 255 : 0;
            write_pgm(fs::path(a.masks_dir) / (ds.scenes[idx[k]].id + ".pgm"), predictions[k].width,
                      predictions[k].height, gray);
        }
    }
    std::cout << "miou " << report.miou << " fscore " << report.fscore << " ciou " << report.ciou
              << " auc " << report.auc << "\n";
    return 0;
}

int cmd_ablate(const Common& c, const std::string& data_dir, const std::string& split_path,
               const std::string& out, const std::vector<std::string>& rows) {
    RunConfig cfg = resolve_config(c);
    Dataset ds = load_dataset(data_dir);
    cfg = adopt_dataset(cfg, ds);
    SplitSpec split = load_split(split_path);
    cfg.split.shots = split.shots;
    std::vector<AblationCell> cells;
    for (AblationCell& cell : ablation_matrix(cfg)) {
        if (rows.empty() || std::find(rows.begin(), rows.end(), cell.row) != rows.end()) {
            cells.push_back(std::move(cell));
        }
    }
    EvalOptions opt;
    opt.beta2 = cfg.eval.beta2;
    opt.threshold = cfg.eval.threshold;
    auto results = run_ablation(cells, ds, split, cfg, opt);
    auto csv = open_out(out);
    write_ablation_csv(csv, results);
    int failed = 0;
    for (const AblationResult& r : results) {
        if (!r.ok) {
            ++failed;
            std::cerr << "row " << r.cell.row << " failed: " << r.error << "\n";
        }
    }
    std::cout << results.size() - failed << "/" << results.size() << " cells completed\n";
    return 0;
}

int cmd_gradcheck(const Common& c, bool ops_only) {
    RunConfig cfg = resolve_config(c);
    const std::uint64_t seed = c.seed_given ? c.seed : cfg.train.seed;
    auto results = ops_only ? gradcheck_ops(seed) : run_gradcheck_suite(seed);
    bool ok = true;
    for (const GradcheckCaseResult& r : results) {
        std::cout << (r.passed ? "ok   " : "FAIL ") << r.name << " max_rel " << r.report.max_rel_error
                  << " coords " << r.report.coordinates;
        if (!r.passed) std::cout << " worst " << r.report.worst_param << "[" << r.report.worst_index << "]";
        std::cout << " (" << r.seconds << " s)\n";
        ok = ok && r.passed;
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Audio-prompted segmentation on synthetic scenes"};
    app.require_subcommand(1);

    Common common;
    std::string out, data_dir, split_path, loss_log;
    std::vector<std::string> rows;
    bool ops_only = false;
    EvalArgs eval_args;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
    add_common(gen, common);
    gen->add_option("-o,--out", out, "Output directory")->required();

    auto* split = app.add_subcommand("split", "Write a few-shot split manifest");
    add_common(split, common);
    split->add_option("-d,--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    split->add_option("-o,--out", out, "Output JSON")->required();

    auto* train = app.add_subcommand("train", "Train a model, write checkpoint and loss log");
    add_common(train, common);
    train->add_option("-d,--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    train->add_option("-s,--split", split_path, "Split manifest")->required()->check(CLI::ExistingFile);
    train->add_option("-o,--out", out, "Checkpoint path")->required();
    train->add_option("--loss-log", loss_log, "Loss CSV path");

    auto* eval = app.add_subcommand("eval", "Score a checkpoint or predicted masks");
    add_common(eval, common);
    eval->add_option("-d,--data", eval_args.data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    eval->add_option("-s,--split", eval_args.split_path, "Split manifest")->required()->check(CLI::ExistingFile);
    eval->add_option("--checkpoint", eval_args.checkpoint, "Model checkpoint")->check(CLI::ExistingFile);
    eval->add_option("--predictions", eval_args.predictions, "Directory of <id>.pgm masks")
        ->check(CLI::ExistingDirectory);
    eval->add_option("-o,--out", eval_args.out, "Report JSON")->required();
    eval->add_option("--masks", eval_args.masks_dir, "Write predicted masks here");
    eval->add_option("--subset", eval_args.subset, "test, seen_test or train");
    eval->add_option("--beta2", eval_args.beta2, "F-score beta squared")->check(CLI::NonNegativeNumber);
    eval->add_flag("--shuffle-audio", eval_args.shuffle_audio, "Pair frames with other scenes' audio");

    auto* ablate = app.add_subcommand("ablate", "Run the strategy/mode ablation matrix");
    add_common(ablate, common);
    ablate->add_option("-d,--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    ablate->add_option("-s,--split", split_path, "Split manifest")->required()->check(CLI::ExistingFile);
    ablate->add_option("-o,--out", out, "CSV path")->required();
    ablate->add_option("--rows", rows, "Subset of rows a..j");

    auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    add_common(grad, common);
    grad->add_flag("--ops-only", ops_only, "Skip the full-model loss");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return 2;
    }

    try {
        if (*gen) return cmd_gen_data(common, out);
        if (*split) return cmd_split(common, data_dir, out);
        if (*train) return cmd_train(common, data_dir, split_path, out, loss_log);
        if (*eval) return cmd_eval(common, eval_args);
        if (*ablate) return cmd_ablate(common, data_dir, split_path, out, rows);
        if (*grad) return cmd_gradcheck(common, ops_only);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
