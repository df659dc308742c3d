#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sor/rng.hpp"
#include "sor/tensor.hpp"

namespace sor::data {

inline constexpr int kImageSide = 32;
inline constexpr int kBoxSide = 8;
inline constexpr int kPixelsPerImage = kImageSide * kImageSide;
inline constexpr std::uint32_t kDatasetFormatVersion = 1;

/// A labeled image set. Images are [n, 32, 32, 1]; labels are exactly
/// 0.0 or 1.0. `standardized` records whether pixel values have been
/// shifted/scaled away from their raw generation range.
struct Dataset {
    nn::Tensor images;
    std::vector<double> labels;
    double noise_ub = 0.0;
    std::uint64_t seed = 0;
    bool standardized = false;

    int size() const { return static_cast<int>(labels.size()); }

    /// Copy of image i as a [32, 32, 1] tensor.
    nn::Tensor image(int index) const;
};

/// Draws n images. Per image, in fixed RNG order: all 1024 pixels as
/// uniforms in [0, noise_ub), one label draw (u < 0.5 means positive),
/// and for positives a top-left corner (row, col) each uniform in
/// {0..24}, then an 8x8 block of exact 1.0 is written over the noise.
Dataset generate(int n, double noise_ub, std::uint64_t seed);

/// Per-pixel affine normalizer fitted on a training split and applied
/// unchanged to any other split.
struct Standardizer {
    double mean = 0.0;
    double stddev = 1.0;
};

/// Mean and sample standard deviation (n-1 denominator) over every
/// pixel of every image. Throws if the pixels are all identical.
Standardizer fit_standardizer(const Dataset& train);

/// Returns a copy with each pixel mapped to (x - mean) / stddev.
Dataset apply_standardizer(const Standardizer& s, const Dataset& ds);

/// Versioned little-endian binary container.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// One row per image: label followed by the 1024 pixels in row-major
/// order, all formatted losslessly.
void export_csv(const Dataset& ds, const std::filesystem::path& path);

}  // namespace sor::data
