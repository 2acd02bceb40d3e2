#include "gavs/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "gavs/random.hpp"

namespace gavs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Rgb {
    double r, g, b;
};

constexpr Rgb kPalette[kPaletteSize] = {
    {0.90, 0.15, 0.15}, {0.15, 0.80, 0.20}, {0.20, 0.30, 0.95},
    {0.95, 0.85, 0.10}, {0.85, 0.20, 0.85}, {0.10, 0.85, 0.85},
};

std::uint8_t to_byte(double v) {
    v = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

std::string scene_id(std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06zu", index);
    return buf;
}

}  // namespace

ShapeKind class_shape(int cls) { return static_cast<ShapeKind>(cls % kShapeKinds); }

bool SceneObject::covers(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    switch (class_shape(cls)) {
        case ShapeKind::Square:
            return std::abs(dx) <= radius && std::abs(dy) <= radius;
        case ShapeKind::Disk:
            return dx * dx + dy * dy <= radius * radius;
        case ShapeKind::Triangle: {
            // apex up, base at cy + radius
            if (dy < -radius || dy > radius) return false;
            const double half_width = radius * (dy + radius) / (2.0 * radius);
            return std::abs(dx) <= half_width;
        }
        case ShapeKind::Cross: {
            const double arm = radius / 3.0;
            const bool in_box = std::abs(dx) <= radius && std::abs(dy) <= radius;
            return in_box && (std::abs(dx) <= arm || std::abs(dy) <= arm);
        }
    }
    return false;
}

std::vector<int> SceneSample::sounding_classes() const {
    std::vector<int> out;
    for (const auto& o : objects) {
        if (o.sounding) out.push_back(o.cls);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<int> SceneSample::silent_classes() const {
    std::vector<int> out;
    for (const auto& o : objects) {
        if (!o.sounding) out.push_back(o.cls);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<int> SceneSample::all_classes() const {
    std::vector<int> out;
    for (const auto& o : objects) out.push_back(o.cls);
    std::sort(out.begin(), out.end());
    return out;
}

Tensor SceneSample::frame_tensor() const {
    const std::size_t s = image_size;
    std::vector<double> v(3 * s * s);
    for (std::size_t p = 0; p < s * s; ++p) {
        for (std::size_t c = 0; c < 3; ++c) v[c * s * s + p] = frame[p * 3 + c] / 255.0;
    }
    return Tensor::from({3, s, s}, std::move(v));
}

std::size_t Dataset::index_of(const std::string& id) const {
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        if (scenes[i].id == id) return i;
    }
    throw ContractError("scene '" + id + "' not in dataset");
}

std::vector<std::uint8_t> object_footprint(const SceneObject& obj, std::size_t image_size,
                                           std::size_t size) {
    std::vector<std::uint8_t> out(size * size, 0);
    const double step = static_cast<double>(image_size) / static_cast<double>(size);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            out[y * size + x] = obj.covers((x + 0.5) * step, (y + 0.5) * step) ? 1 : 0;
        }
    }
    return out;
}

bool generate_scene(const DataConfig& cfg, std::size_t mask_size, std::uint64_t scene_seed,
                    SceneSample& out) {
    std::mt19937_64 rng(scene_seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double s = static_cast<double>(cfg.image_size);
    const int num_classes = static_cast<int>(cfg.num_classes);

    const bool distractor = unit(rng) < cfg.distractor_rate;
    std::size_t n = distractor ? 2 + (unit(rng) < 0.5 ? 0 : 1) : 1 + (unit(rng) < 0.5 ? 0 : 1);

    std::vector<int> classes(cfg.num_classes);
    for (int c = 0; c < num_classes; ++c) classes[c] = c;
    std::shuffle(classes.begin(), classes.end(), rng);
    classes.resize(n);

    std::vector<bool> sounding(n, true);
    if (distractor) {
        // proper nonempty subset of the objects sounds
        std::size_t k = 1 + static_cast<std::size_t>(unit(rng) * (n - 1));
        k = std::min(k, n - 1);
        for (std::size_t i = k; i < n; ++i) sounding[i] = false;
        std::shuffle(sounding.begin(), sounding.end(), rng);
    }

    out.objects.clear();
    const double r_lo = s * 0.125;
    const double r_hi = s * 0.19;
    for (std::size_t i = 0; i < n; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
            SceneObject o;
            o.cls = classes[i];
            o.sounding = sounding[i];
            o.radius = r_lo + unit(rng) * (r_hi - r_lo);
            o.cx = o.radius + unit(rng) * (s - 2 * o.radius);
            o.cy = o.radius + unit(rng) * (s - 2 * o.radius);
            placed = std::all_of(out.objects.begin(), out.objects.end(), [&](const SceneObject& q) {
                const double gap = 1.0;
                return std::abs(o.cx - q.cx) > o.radius + q.radius + gap ||
                       std::abs(o.cy - q.cy) > o.radius + q.radius + gap;
            });
            if (placed) out.objects.push_back(o);
        }
        if (!placed) return false;
    }

    const std::size_t si = cfg.image_size;
    out.image_size = si;
    out.mask_size = mask_size;
    out.frame.assign(si * si * 3, 0);
    std::uniform_real_distribution<double> bg(0.10, 0.25);
    std::uniform_real_distribution<double> jitter(-0.03, 0.03);
    for (std::size_t y = 0; y < si; ++y) {
        for (std::size_t x = 0; x < si; ++x) {
            double rgb[3];
            const double g = bg(rng);
            rgb[0] = rgb[1] = rgb[2] = g;
            for (const SceneObject& o : out.objects) {
                if (o.covers(x + 0.5, y + 0.5)) {
                    const Rgb& c = kPalette[o.cls / kShapeKinds];
                    rgb[0] = c.r;
                    rgb[1] = c.g;
                    rgb[2] = c.b;
                }
            }
            for (int c = 0; c < 3; ++c) {
                out.frame[(y * si + x) * 3 + c] = to_byte(rgb[c] + jitter(rng));
            }
        }
    }

    out.mask.assign(mask_size * mask_size, 0);
    for (const SceneObject& o : out.objects) {
        if (!o.sounding) continue;
        auto fp = object_footprint(o, si, mask_size);
        for (std::size_t p = 0; p < fp.size(); ++p) out.mask[p] |= fp[p];
    }

    out.audio.assign(cfg.audio_dim(), 0.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (const SceneObject& o : out.objects) {
        if (o.sounding) out.audio[o.cls] += cfg.gamma;
    }
    if (cfg.sigma > 0) {
        for (double& a : out.audio) a += cfg.sigma * noise(rng);
    }
    return true;
}

Dataset generate_synthetic_dataset(const DataConfig& cfg, std::size_t mask_size) {
    if (cfg.num_classes < 4 || cfg.num_classes > kMaxClasses) {
        throw ConfigError("data.num_classes must be in [4, " + std::to_string(kMaxClasses) + "]");
    }
    if (cfg.image_size < 8) throw ConfigError("data.image_size must be >= 8");
    Dataset ds;
    ds.config = cfg;
    ds.mask_size = mask_size;
    std::size_t index = 0;
    while (ds.scenes.size() < cfg.num_scenes) {
        SceneSample scene;
        if (generate_scene(cfg, mask_size, derive_seed(cfg.seed, index), scene)) {
            scene.id = scene_id(index);
            ds.scenes.push_back(std::move(scene));
        } else {
            std::cerr << "skipping scene " << index << ": object placement failed\n";
        }
        ++index;
    }
    return ds;
}

void write_ppm(const fs::path& path, std::size_t w, std::size_t h,
               const std::vector<std::uint8_t>& rgb) {
    std::ofstream f(path, std::ios::binary);
    f << "P6\n" << w << " " << h << "\n255\n";
    f.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (!f) throw std::runtime_error("failed to write " + path.string());
}

void write_pgm(const fs::path& path, std::size_t w, std::size_t h,
               const std::vector<std::uint8_t>& gray) {
    std::ofstream f(path, std::ios::binary);
    f << "P5\n" << w << " " << h << "\n255\n";
    f.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
    if (!f) throw std::runtime_error("failed to write " + path.string());
}

std::vector<std::uint8_t> read_netpbm(const fs::path& path, const std::string& magic,
                                      std::size_t& w, std::size_t& h) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    std::string m;
    std::size_t maxval = 0;
    f >> m >> w >> h >> maxval;
    if (m != magic || maxval != 255) {
        throw std::runtime_error(path.string() + ": expected " + magic + " with maxval 255");
    }
    f.get();  // single whitespace before raster
    const std::size_t channels = magic == "P6" ? 3 : 1;
    std::vector<std::uint8_t> data(w * h * channels);
    f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!f) throw std::runtime_error(path.string() + ": truncated raster");
    return data;
}

namespace {

json objects_json(const SceneSample& s) {
    json arr = json::array();
    for (const SceneObject& o : s.objects) {
        arr.push_back({{"class", o.cls}, {"cx", o.cx}, {"cy", o.cy}, {"radius", o.radius},
                       {"sounding", o.sounding}});
    }
    return arr;
}

}  // namespace

void write_dataset(const Dataset& ds, const fs::path& dir) {
    fs::create_directories(dir / "scenes");
    json manifest;
    manifest["num_classes"] = ds.config.num_classes;
    manifest["image_size"] = ds.config.image_size;
    manifest["mask_size"] = ds.mask_size;
    manifest["audio_dim"] = ds.config.audio_dim();
    manifest["gamma"] = ds.config.gamma;
    manifest["sigma"] = ds.config.sigma;
    manifest["distractor_rate"] = ds.config.distractor_rate;
    manifest["nuisance_dims"] = ds.config.nuisance_dims;
    manifest["seed"] = ds.config.seed;
    json scenes = json::array();
    for (const SceneSample& s : ds.scenes) {
        const fs::path sd = dir / "scenes" / s.id;
        fs::create_directories(sd);
        write_ppm(sd / "frame.ppm", s.image_size, s.image_size, s.frame);
        std::vector<std::uint8_t> mask(s.mask.size());
        std::transform(s.mask.begin(), s.mask.end(), mask.begin(),
                       [](std::uint8_t v) { return v ? 255 : 0; });
        write_pgm(sd / "mask.pgm", s.mask_size, s.mask_size, mask);
        std::ofstream a(sd / "audio.txt");
        char buf[64];
        for (double v : s.audio) {
            std::snprintf(buf, sizeof buf, "%.17g\n", v);
            a << buf;
        }
        scenes.push_back({{"id", s.id},
                          {"sounding", s.sounding_classes()},
                          {"silent", s.silent_classes()},
                          {"objects", objects_json(s)}});
    }
    manifest["scenes"] = scenes;
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
}

Dataset load_dataset(const fs::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw std::runtime_error("no manifest.json in " + dir.string());
    const json manifest = json::parse(mf);
    Dataset ds;
    ds.config.num_classes = manifest.at("num_classes");
    ds.config.image_size = manifest.at("image_size");
    ds.config.gamma = manifest.at("gamma");
    ds.config.sigma = manifest.at("sigma");
    ds.config.distractor_rate = manifest.at("distractor_rate");
    ds.config.nuisance_dims = manifest.at("nuisance_dims");
    ds.config.seed = manifest.at("seed");
    ds.mask_size = manifest.at("mask_size");
    const std::size_t audio_dim = manifest.at("audio_dim");
    for (const json& e : manifest.at("scenes")) {
        SceneSample s;
        s.id = e.at("id");
        const fs::path sd = dir / "scenes" / s.id;
        std::size_t w = 0, h = 0;
        s.frame = read_netpbm(sd / "frame.ppm", "P6", w, h);
        s.image_size = w;
        auto mask = read_netpbm(sd / "mask.pgm", "P5", w, h);
        s.mask_size = w;
        s.mask.resize(mask.size());
        std::transform(mask.begin(), mask.end(), s.mask.begin(),
                       [](std::uint8_t v) { return v > 127 ? 1 : 0; });
        std::ifstream a(sd / "audio.txt");
        double v;
        while (a >> v) s.audio.push_back(v);
        if (s.audio.size() != audio_dim) {
            throw std::runtime_error(sd.string() + ": audio has " + std::to_string(s.audio.size()) +
                                     " values, manifest says " + std::to_string(audio_dim));
        }
        for (const json& o : e.at("objects")) {
            SceneObject obj;
            obj.cls = o.at("class").get<int>();
            obj.cx = o.at("cx").get<double>();
            obj.cy = o.at("cy").get<double>();
            obj.radius = o.at("radius").get<double>();
            obj.sounding = o.at("sounding").get<bool>();
            s.objects.push_back(obj);
        }
        ds.scenes.push_back(std::move(s));
    }
    ds.config.num_scenes = ds.scenes.size();
    return ds;
}

Tensor stack_frames(const Dataset& ds, const std::vector<std::size_t>& idx) {
    const std::size_t s = ds.config.image_size;
    std::vector<double> v;
    v.reserve(idx.size() * 3 * s * s);
    for (std::size_t i : idx) {
        auto f = ds.scenes.at(i).frame_tensor().data();
        v.insert(v.end(), f.begin(), f.end());
    }
    return Tensor::from({idx.size(), 3, s, s}, std::move(v));
}

Tensor stack_audio(const Dataset& ds, const std::vector<std::size_t>& idx) {
    const std::size_t d = ds.config.audio_dim();
    std::vector<double> v;
    v.reserve(idx.size() * d);
    for (std::size_t i : idx) {
        const auto& a = ds.scenes.at(i).audio;
        v.insert(v.end(), a.begin(), a.end());
    }
    return Tensor::from({idx.size(), d}, std::move(v));
}

Tensor stack_masks(const Dataset& ds, const std::vector<std::size_t>& idx) {
    const std::size_t m = ds.mask_size;
    std::vector<double> v;
    v.reserve(idx.size() * m * m);
    for (std::size_t i : idx) {
        for (std::uint8_t p : ds.scenes.at(i).mask) v.push_back(p);
    }
    return Tensor::from({idx.size(), m, m}, std::move(v));
}

}  // namespace gavs
