#include "gavs/evaluation.hpp"

#include <cstdio>

namespace gavs {

using nlohmann::json;

json report_to_json(const MetricReport& r) {
    json samples = json::array();
    for (const SampleRecord& s : r.samples) {
        samples.push_back({{"id", s.id},
                           {"iou", s.iou},
                           {"box_iou", s.box_iou},
                           {"predicted_pixels", s.predicted_pixels},
                           {"gt_pixels", s.gt_pixels}});
    }
    return {{"miou", r.miou},
            {"fscore", r.fscore},
            {"ciou", r.ciou},
            {"auc", r.auc},
            {"metadata",
             {{"config_hash", r.config_hash},
              {"seed", r.seed},
              {"strategy", r.strategy},
              {"mode", r.mode},
              {"shots", r.shots},
              {"subset", r.subset},
              {"samples", r.samples.size()}}},
            {"per_sample", samples}};
}

BinaryMask scene_mask(const SceneSample& s) {
    return {s.mask_size, s.mask_size, s.mask};
}

MetricReport score_predictions(const std::vector<ProbabilityMap>& maps, const Dataset& ds,
                               const std::vector<std::size_t>& idx, const EvalOptions& opt) {
    if (maps.size() != idx.size()) throw ContractError("one probability map per scene required");
    std::vector<BinaryMask> preds, gts;
    std::vector<BBox> boxes;
    std::vector<ProbabilityMap> boxed_maps;
    MetricReport r;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const SceneSample& s = ds.scenes.at(idx[k]);
        preds.push_back(maps[k].binarize(opt.threshold));
        gts.push_back(scene_mask(s));
        SampleRecord rec;
        rec.id = s.id;
        rec.iou = mask_iou(preds.back(), gts.back());
        rec.predicted_pixels = preds.back().count();
        rec.gt_pixels = gts.back().count();
        if (auto box = mask_to_bbox(gts.back())) {
            boxes.push_back(*box);
            boxed_maps.push_back(maps[k]);
            rec.box_iou = mask_iou(preds.back(), bbox_region(*box, s.mask_size, s.mask_size));
        }
        r.samples.push_back(rec);
    }
    r.miou = miou(preds, gts);
    r.fscore = fscore(preds, gts, opt.beta2);
    LocalizationScore loc = ciou_auc(boxed_maps, boxes, opt.threshold);
    r.ciou = loc.ciou;
    r.auc = loc.auc;
    return r;
}

EvalResult evaluate(const GavsModel& model, const Dataset& ds, const std::vector<std::size_t>& idx,
                    const EvalOptions& opt) {
    NoGradGuard no_grad;
    EvalResult res;
    const std::size_t m = ds.mask_size;
    for (std::size_t start = 0; start < idx.size(); start += opt.batch) {
        std::vector<std::size_t> chunk(idx.begin() + start,
                                       idx.begin() + std::min(idx.size(), start + opt.batch));
        std::vector<std::size_t> audio_idx = chunk;
        if (opt.shuffle_audio && chunk.size() > 1) {
            std::rotate(audio_idx.begin(), audio_idx.begin() + 1, audio_idx.end());
        }
        ModelOutputs out = model.forward(stack_frames(ds, chunk), stack_audio(ds, audio_idx));
        Tensor prob = out.mask().probabilities();
        if (prob.size(1) != m || prob.size(2) != m) {
            throw ShapeError("model mask " + shape_str(prob.shape()) + " does not match dataset masks " +
                             std::to_string(m) + "x" + std::to_string(m));
        }
        auto p = prob.data();
        for (std::size_t k = 0; k < chunk.size(); ++k) {
            res.maps.push_back({m, m, std::vector<double>(p.begin() + k * m * m, p.begin() + (k + 1) * m * m)});
        }
    }
    res.report = score_predictions(res.maps, ds, idx, opt);
    for (const ProbabilityMap& map : res.maps) res.predictions.push_back(map.binarize(opt.threshold));
    const RunConfig& cfg = model.config();
    res.report.config_hash = config_hash(cfg);
    res.report.seed = cfg.train.seed;
    res.report.strategy = to_string(cfg.decoder.strategy);
    res.report.mode = to_string(cfg.decoder.fusion);
    res.report.shots = cfg.split.shots;
    return res;
}

std::vector<AblationCell> ablation_matrix(const RunConfig& base) {
    RunConfig prompt_only = base;
    prompt_only.decoder.fusion = FusionMode::AudioPrompt;
    prompt_only.sap.enabled = false;
    prompt_only.encoder.adapters_enabled = false;

    auto with_strategy = [&](TuningStrategy s) {
        RunConfig c = prompt_only;
        c.decoder.strategy = s;
        return c;
    };
    std::vector<AblationCell> cells = {
        {"a", "freeze", with_strategy(TuningStrategy::Freeze)},
        {"b", "fine-tune", with_strategy(TuningStrategy::FineTune)},
        {"c", "AV-adapter", with_strategy(TuningStrategy::AVAdapter)},
        {"d", "VA-adapter", with_strategy(TuningStrategy::VAAdapter)},
        {"e", "ColA", with_strategy(TuningStrategy::ColA)},
        {"f", "ColA + AV + VA", with_strategy(TuningStrategy::ColAPlusAVVA)},
    };
    RunConfig fusion = with_strategy(TuningStrategy::ColA);
    fusion.decoder.fusion = FusionMode::AVFusion;
    cells.push_back({"g", "AV-fusion", fusion});
    cells.push_back({"h", "audio-prompt", with_strategy(TuningStrategy::ColA)});
    RunConfig adapters = with_strategy(TuningStrategy::ColA);
    adapters.encoder.adapters_enabled = true;
    cells.push_back({"i", "+visual-adapter", adapters});
    RunConfig full = adapters;
    full.sap.enabled = true;
    cells.push_back({"j", "+SAP", full});
    return cells;
}

std::vector<AblationResult> run_ablation(const std::vector<AblationCell>& cells, const Dataset& ds,
                                         const SplitSpec& split, const RunConfig& base,
                                         const EvalOptions& opt) {
    ParameterSnapshot foundation;
    {
        GavsModel donor(base, ds.config.audio_dim());
        pretrain_foundation(donor);
        foundation = snapshot_foundation(donor);
    }
    const auto train_idx = indices_of(ds, split.train);
    const bool seen = !split.seen_test.empty();
    const auto test_idx = indices_of(ds, seen ? split.seen_test : split.test);
    std::vector<AblationResult> rows;
    for (const AblationCell& cell : cells) {
        AblationResult r;
        r.cell = cell;
        try {
            GavsModel model(cell.config, ds.config.audio_dim());
            load_foundation(model, foundation);
            auto log = train_gavs(model, ds, train_idx);
            r.initial_loss = log.empty() ? 0.0 : log.front().total;
            r.report = evaluate(model, ds, test_idx, opt).report;
            r.report.subset = seen ? "seen_test" : "test";
            r.ok = true;
        } catch (const std::exception& e) {
            r.error = e.what();
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationResult>& rows) {
    out << "row,method,strategy,mode,visual_adapters,sap,miou,fscore,ciou,auc,initial_loss,status\n";
    char buf[512];
    for (const AblationResult& r : rows) {
        const RunConfig& c = r.cell.config;
        std::snprintf(buf, sizeof buf, "%s,\"%s\",%s,%s,%d,%d,%.6f,%.6f,%.6f,%.6f,%.17g,\"%s\"\n",
                      r.cell.row.c_str(), r.cell.method.c_str(), to_string(c.decoder.strategy).c_str(),
                      to_string(c.decoder.fusion).c_str(), c.encoder.adapters_enabled ? 1 : 0,
                      c.sap.enabled ? 1 : 0, r.report.miou, r.report.fscore, r.report.ciou,
                      r.report.auc, r.initial_loss, r.ok ? "ok" : ("error: " + r.error).c_str());
        out << buf;
    }
}

}  // namespace gavs
