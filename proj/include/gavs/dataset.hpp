#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gavs/config.hpp"
#include "gavs/tensor.hpp"

namespace gavs {

enum class ShapeKind { Square = 0, Disk = 1, Triangle = 2, Cross = 3 };
inline constexpr std::size_t kShapeKinds = 4;
inline constexpr std::size_t kPaletteSize = 6;
inline constexpr std::size_t kMaxClasses = kShapeKinds * kPaletteSize;

// Class c is shape (c % 4) in palette color (c / 4).
ShapeKind class_shape(int cls);

struct SceneObject {
    int cls = 0;
    double cx = 0, cy = 0;  // center, image pixels
    double radius = 0;      // half extent, image pixels
    bool sounding = false;

    // Whether image-space point (x, y) lies inside the shape.
    bool covers(double x, double y) const;
};

struct SceneSample {
    std::string id;
    std::size_t image_size = 0;
    std::size_t mask_size = 0;
    std::vector<std::uint8_t> frame;  // interleaved RGB, image_size^2 * 3
    std::vector<double> audio;        // d_in
    std::vector<std::uint8_t> mask;   // 0/1, mask_size^2
    std::vector<SceneObject> objects;

    std::vector<int> sounding_classes() const;
    std::vector<int> silent_classes() const;
    std::vector<int> all_classes() const;

    // [3, S, S] planar tensor with values byte/255.
    Tensor frame_tensor() const;
};

struct Dataset {
    DataConfig config;
    std::size_t mask_size = 0;
    std::vector<SceneSample> scenes;

    std::size_t index_of(const std::string& id) const;
};

// Footprint of one object rasterized at `size` x `size` (pixel centers mapped
// onto the image grid).
std::vector<std::uint8_t> object_footprint(const SceneObject& obj, std::size_t image_size,
                                           std::size_t size);

// Builds one scene from its own seed; returns false when placement fails.
bool generate_scene(const DataConfig& cfg, std::size_t mask_size, std::uint64_t scene_seed,
                    SceneSample& out);

// Scenes are numbered by generation index; scene i draws from
// derive_seed(cfg.seed, i), so scenes never depend on each other.
Dataset generate_synthetic_dataset(const DataConfig& cfg, std::size_t mask_size);

// Layout: scenes/<id>/{frame.ppm, audio.txt, mask.pgm} plus manifest.json.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// Netpbm helpers (binary 8-bit).
void write_ppm(const std::filesystem::path& path, std::size_t w, std::size_t h,
               const std::vector<std::uint8_t>& rgb);
void write_pgm(const std::filesystem::path& path, std::size_t w, std::size_t h,
               const std::vector<std::uint8_t>& gray);
std::vector<std::uint8_t> read_netpbm(const std::filesystem::path& path, const std::string& magic,
                                      std::size_t& w, std::size_t& h);

// Batched views used by training and evaluation.
Tensor stack_frames(const Dataset& ds, const std::vector<std::size_t>& idx);  // [B,3,S,S]
Tensor stack_audio(const Dataset& ds, const std::vector<std::size_t>& idx);   // [B,d_in]
Tensor stack_masks(const Dataset& ds, const std::vector<std::size_t>& idx);   // [B,M,M]

}  // namespace gavs
