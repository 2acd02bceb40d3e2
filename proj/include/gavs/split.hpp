#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gavs/config.hpp"
#include "gavs/dataset.hpp"

namespace gavs {

struct SplitSpec {
    std::vector<int> seen_classes;
    std::vector<int> unseen_classes;
    std::size_t shots = 0;
    std::vector<std::string> shot_ids;  // injected scenes, grouped by unseen class
    std::uint64_t seed = 0;

    std::vector<std::string> train;      // seen-only scenes plus the shot scenes
    std::vector<std::string> test;       // scenes containing an unseen class, minus shots
    std::vector<std::string> seen_test;  // held-out scenes with seen classes only
};

// A scene belongs to the unseen side when any of its objects (sounding or
// silent) has an unseen class. Shot scenes for class u are drawn from scenes
// where u sounds and no other unseen class appears, in a seed-fixed order, so
// the 1-shot picks are a prefix of the 3-shot picks and so on.
SplitSpec make_fewshot_split(const Dataset& ds, const SplitConfig& cfg);

void write_split(const SplitSpec& split, const std::filesystem::path& path);
SplitSpec load_split(const std::filesystem::path& path);

std::vector<std::size_t> indices_of(const Dataset& ds, const std::vector<std::string>& ids);

}  // namespace gavs
