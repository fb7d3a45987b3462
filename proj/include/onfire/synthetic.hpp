#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>

#include "onfire/image.hpp"

namespace onfire {

/// Seeded test frame: a smooth background with one soft blob. Fire frames get a bright
/// orange/red blob on a dark background; no-fire frames a green/blue scene.
inline RgbImage synthetic_frame(std::size_t width, std::size_t height, std::uint64_t seed, bool fire) {
  std::mt19937_64 gen(seed * 2 + (fire ? 1 : 0));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double cx = (0.25 + 0.5 * u(gen)) * width, cy = (0.25 + 0.5 * u(gen)) * height;
  const double radius = (0.15 + 0.2 * u(gen)) * std::min(width, height);
  const double tilt = u(gen);
  RgbImage img(width, height);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double dx = (x - cx) / radius, dy = (y - cy) / radius;
      const double blob = std::exp(-(dx * dx + dy * dy));
      const double ramp = (tilt * x / width + (1.0 - tilt) * y / height);
      const double noise = 12.0 * (u(gen) - 0.5);
      double r, g, b;
      if (fire) {
        r = 40 + 30 * ramp + 200 * blob;
        g = 30 + 20 * ramp + 150 * blob * blob;
        b = 25 + 15 * ramp + 20 * blob;
      } else {
        r = 50 + 40 * ramp + 40 * blob;
        g = 90 + 60 * ramp + 80 * blob;
        b = 110 + 50 * (1 - ramp) + 60 * blob;
      }
      std::uint8_t* px = img.at(x, y);
      px[0] = static_cast<std::uint8_t>(std::clamp(r + noise, 0.0, 255.0));
      px[1] = static_cast<std::uint8_t>(std::clamp(g + noise, 0.0, 255.0));
      px[2] = static_cast<std::uint8_t>(std::clamp(b + noise, 0.0, 255.0));
    }
  }
  return img;
}

/// Writes `per_class` frames into root/fire and root/nofire as frame_NNN.ppm.
inline void write_synthetic_dataset(const std::string& root, std::size_t per_class, std::uint64_t seed,
                                    std::size_t width = 64, std::size_t height = 48) {
  for (const bool fire : {true, false}) {
    const auto dir = std::filesystem::path(root) / (fire ? "fire" : "nofire");
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < per_class; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%03zu.ppm", i);
      save_ppm((dir / name).string(), synthetic_frame(width, height, seed + i, fire));
    }
  }
}

}  // namespace onfire
