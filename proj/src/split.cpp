#include "gavs/split.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <unordered_map>

#include "json.hpp"
#include "gavs/random.hpp"

namespace gavs {

using nlohmann::json;

SplitSpec make_fewshot_split(const Dataset& ds, const SplitConfig& cfg) {
    const int num_classes = static_cast<int>(ds.config.num_classes);
    SplitSpec sp;
    sp.shots = cfg.shots;
    sp.seed = cfg.seed;

    std::vector<int> unseen = cfg.unseen_classes;
    if (unseen.empty() && cfg.num_unseen > 0) {
        std::vector<int> all(num_classes);
        for (int c = 0; c < num_classes; ++c) all[c] = c;
        std::mt19937_64 rng(derive_seed(cfg.seed, "unseen-classes"));
        std::shuffle(all.begin(), all.end(), rng);
        unseen.assign(all.begin(), all.begin() + std::min<std::size_t>(cfg.num_unseen, all.size()));
    }
    std::sort(unseen.begin(), unseen.end());
    if (std::adjacent_find(unseen.begin(), unseen.end()) != unseen.end()) {
        throw ConfigError("split.unseen_classes has duplicates");
    }
    for (int c : unseen) {
        if (c < 0 || c >= num_classes) throw ConfigError("unseen class " + std::to_string(c) + " out of range");
    }
    if (static_cast<int>(unseen.size()) >= num_classes) throw ConfigError("no seen classes left");
    const std::set<int> unseen_set(unseen.begin(), unseen.end());
    for (int c = 0; c < num_classes; ++c) {
        if (!unseen_set.count(c)) sp.seen_classes.push_back(c);
    }
    sp.unseen_classes = unseen;

    std::vector<std::size_t> seen_only;
    std::vector<std::size_t> unseen_side;
    for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
        const auto cls = ds.scenes[i].all_classes();
        const bool touches = std::any_of(cls.begin(), cls.end(), [&](int c) { return unseen_set.count(c) > 0; });
        (touches ? unseen_side : seen_only).push_back(i);
    }

    std::vector<std::size_t> shuffled = seen_only;
    std::mt19937_64 rng(derive_seed(cfg.seed, "seen-test"));
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    if (cfg.seen_test > shuffled.size()) {
        throw ConfigError("split.seen_test " + std::to_string(cfg.seen_test) + " exceeds the " +
                          std::to_string(shuffled.size()) + " seen-only scenes");
    }
    std::set<std::size_t> seen_test(shuffled.begin(), shuffled.begin() + cfg.seen_test);

    std::set<std::size_t> shot_set;
    for (int u : unseen) {
        std::vector<std::size_t> candidates;
        for (std::size_t i : unseen_side) {
            const SceneSample& s = ds.scenes[i];
            const auto snd = s.sounding_classes();
            const auto cls = s.all_classes();
            const bool sounds = std::find(snd.begin(), snd.end(), u) != snd.end();
            const bool other_unseen = std::any_of(cls.begin(), cls.end(), [&](int c) {
                return c != u && unseen_set.count(c) > 0;
            });
            if (sounds && !other_unseen) candidates.push_back(i);
        }
        if (candidates.size() < cfg.shots + 1) {
            throw ConfigError("unseen class " + std::to_string(u) + " has " +
                              std::to_string(candidates.size()) + " eligible scenes, need " +
                              std::to_string(cfg.shots) + " shots plus test scenes");
        }
        std::mt19937_64 crng(derive_seed(cfg.seed, static_cast<std::uint64_t>(1000 + u)));
        std::shuffle(candidates.begin(), candidates.end(), crng);
        for (std::size_t k = 0; k < cfg.shots; ++k) {
            shot_set.insert(candidates[k]);
            sp.shot_ids.push_back(ds.scenes[candidates[k]].id);
        }
    }

    for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
        const std::string& id = ds.scenes[i].id;
        if (seen_test.count(i)) {
            sp.seen_test.push_back(id);
        } else if (shot_set.count(i)) {
            sp.train.push_back(id);
        } else if (std::binary_search(unseen_side.begin(), unseen_side.end(), i)) {
            sp.test.push_back(id);
        } else {
            sp.train.push_back(id);
        }
    }
    return sp;
}

void write_split(const SplitSpec& sp, const std::filesystem::path& path) {
    json j;
    j["seen_classes"] = sp.seen_classes;
    j["unseen_classes"] = sp.unseen_classes;
    j["shots"] = sp.shots;
    j["seed"] = sp.seed;
    j["shot_ids"] = sp.shot_ids;
    j["train"] = sp.train;
    j["test"] = sp.test;
    j["seen_test"] = sp.seen_test;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream(path) << j.dump(2) << "\n";
}

SplitSpec load_split(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open split manifest " + path.string());
    const json j = json::parse(f);
    SplitSpec sp;
    sp.seen_classes = j.at("seen_classes").get<std::vector<int>>();
    sp.unseen_classes = j.at("unseen_classes").get<std::vector<int>>();
    sp.shots = j.at("shots");
    sp.seed = j.at("seed");
    sp.shot_ids = j.at("shot_ids").get<std::vector<std::string>>();
    sp.train = j.at("train").get<std::vector<std::string>>();
    sp.test = j.at("test").get<std::vector<std::string>>();
    sp.seen_test = j.at("seen_test").get<std::vector<std::string>>();
    return sp;
}

std::vector<std::size_t> indices_of(const Dataset& ds, const std::vector<std::string>& ids) {
    std::unordered_map<std::string, std::size_t> lookup;
    for (std::size_t i = 0; i < ds.scenes.size(); ++i) lookup.emplace(ds.scenes[i].id, i);
    std::vector<std::size_t> out;
    out.reserve(ids.size());
    for (const std::string& id : ids) {
        auto it = lookup.find(id);
        if (it == lookup.end()) throw ContractError("scene '" + id + "' not in dataset");
        out.push_back(it->second);
    }
    return out;
}

}  // namespace gavs
