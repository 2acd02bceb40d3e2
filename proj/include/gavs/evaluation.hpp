#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "gavs/dataset.hpp"
#include "gavs/metrics.hpp"
#include "gavs/model.hpp"
#include "gavs/split.hpp"
#include "gavs/trainer.hpp"

namespace gavs {

struct SampleRecord {
    std::string id;
    double iou = 0;
    double box_iou = 0;
    std::size_t predicted_pixels = 0;
    std::size_t gt_pixels = 0;
};

struct MetricReport {
    double miou = 0;
    double fscore = 0;
    double ciou = 0;
    double auc = 0;
    std::vector<SampleRecord> samples;
    // run metadata
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string strategy;
    std::string mode;
    std::size_t shots = 0;
    std::string subset;
};

nlohmann::json report_to_json(const MetricReport& r);

struct EvalOptions {
    double beta2 = 0.3;
    double threshold = 0.5;
    // Rotate audio by one scene within each evaluation batch so every frame
    // is paired with another scene's sound.
    bool shuffle_audio = false;
    std::size_t batch = 32;
};

struct EvalResult {
    MetricReport report;
    std::vector<ProbabilityMap> maps;
    std::vector<BinaryMask> predictions;
};

BinaryMask scene_mask(const SceneSample& s);

// Scores ready-made predictions against their scenes (no model involved).
MetricReport score_predictions(const std::vector<ProbabilityMap>& maps, const Dataset& ds,
                               const std::vector<std::size_t>& idx, const EvalOptions& opt);

EvalResult evaluate(const GavsModel& model, const Dataset& ds, const std::vector<std::size_t>& idx,
                    const EvalOptions& opt = {});

// Rows a-j: six decoder tuning strategies in audio-prompt mode, AV-fusion vs
// audio-prompt, then visual adapters and SAP added on top.
struct AblationCell {
    std::string row;
    std::string method;
    RunConfig config;
};
std::vector<AblationCell> ablation_matrix(const RunConfig& base);

struct AblationResult {
    AblationCell cell;
    bool ok = false;
    std::string error;
    double initial_loss = 0;  // first training step loss
    MetricReport report;
};

// Trains and evaluates each cell on shared data and a shared foundation
// (pretrained once from `base`). Failed cells are recorded and skipped.
std::vector<AblationResult> run_ablation(const std::vector<AblationCell>& cells, const Dataset& ds,
                                         const SplitSpec& split, const RunConfig& base,
                                         const EvalOptions& opt = {});

void write_ablation_csv(std::ostream& out, const std::vector<AblationResult>& rows);

}  // namespace gavs
