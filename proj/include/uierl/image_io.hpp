#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "uierl/imaging.hpp"

namespace uierl::io {

using imaging::Raster;
using imaging::SceneBatch;

// 8-bit PNG, non-interlaced. The reader accepts grayscale, RGB and RGBA
// (alpha dropped); the writers emit RGB (color type 2) or grayscale (0).
void write_png_rgb8(const std::filesystem::path& path, const Raster& img01);
void write_png_gray8(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels,
                     int h, int w);
Raster read_png_rgb(const std::filesystem::path& path); // 3xHxW in [0,1]

// 16-bit binary PGM (P5, maxval 65535, big-endian samples).
void write_pgm16(const std::filesystem::path& path, const Raster& depth01); // 1xHxW
Raster read_pgm16(const std::filesystem::path& path);

// Scene directory layout:
//   <dir>/view_<i>.png   degraded views
//   <dir>/ref_<i>.png    references (optional)
//   <dir>/depth_<i>.pgm  depth maps (optional)
//   <dir>/scene.json     water parameters and jitter used by the synthesizer
void save_scene(const std::filesystem::path& dir, const SceneBatch& batch);
SceneBatch load_scene(const std::filesystem::path& dir);

// All scene subdirectories under root, sorted by name.
std::vector<SceneBatch> load_scenes(const std::filesystem::path& root);

} // namespace uierl::io
