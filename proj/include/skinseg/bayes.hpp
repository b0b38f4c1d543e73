#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "skinseg/dataset.hpp"
#include "skinseg/imgio.hpp"

namespace skinseg::bayes {

/// Class-conditional colour histograms for skin and non-skin pixels.
/// Cells are laid out R-fastest: index = r + bins * (g + bins * b).
struct ColorHistogramPair {
    int bins_per_channel = 32;
    std::vector<std::uint64_t> skin_counts;
    std::vector<std::uint64_t> nonskin_counts;
    std::uint64_t n_skin = 0;
    std::uint64_t n_nonskin = 0;

    std::size_t cell(std::array<int, 3> idx) const noexcept
    {
        const auto b = std::size_t(bins_per_channel);
        return std::size_t(idx[0]) + b * (std::size_t(idx[1]) + b * std::size_t(idx[2]));
    }

    friend bool operator==(const ColorHistogramPair&, const ColorHistogramPair&) = default;
};

struct Priors {
    double skin = 0.5;
    double nonskin = 0.5;
};

struct PosteriorOptions {
    Priors priors{};
    /// Add-alpha smoothing of each cell count. Zero reproduces the plain count ratio.
    double alpha = 0.0;
};

std::array<int, 3> quantize_color(std::array<double, 3> rgb, int bins);

ColorHistogramPair empty_histograms(int bins);

/// Tallies every pixel of every sample into the table selected by its truth bit.
/// An empty class is recorded as-is; posterior() rejects it later.
ColorHistogramPair fit_histograms(std::span<const SamplePair> samples, int bins = 32);

/// P(skin | v) with P(v | C) = C(v) / N_C. Returns the skin prior when neither class
/// has seen the colour.
double posterior(const ColorHistogramPair& hist, std::array<double, 3> rgb, const PosteriorOptions& opts = {});

ProbMap bc_prob_map(const ColorHistogramPair& hist, const Image& img, const PosteriorOptions& opts = {});

/// bit = value >= threshold.
BinaryMask binarize(const ProbMap& map, double threshold = 0.5);

/// "BCH1" file: magic, u32 bins, skin counts, non-skin counts (u64 LE each), n_skin, n_nonskin.
std::vector<std::uint8_t> serialize(const ColorHistogramPair& hist);
ColorHistogramPair deserialize(std::span<const std::uint8_t> bytes);
void save_histograms(const std::filesystem::path& path, const ColorHistogramPair& hist);
ColorHistogramPair load_histograms(const std::filesystem::path& path);

}  // namespace skinseg::bayes
