#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace skinseg {

/// H x W x C raster with interleaved unit-interval intensities.
/// C is 1 (grayscale), 3 (RGB) or, for stacked ensemble inputs, any N >= 1.
class Image {
public:
    Image() = default;
    Image(int height, int width, int channels, double fill = 0.0);
    Image(int height, int width, int channels, std::vector<double> data);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    int channels() const noexcept { return channels_; }
    std::size_t pixel_count() const noexcept { return std::size_t(height_) * std::size_t(width_); }
    bool empty() const noexcept { return data_.empty(); }

    double& at(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
    double at(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    /// Copy of channel `c` as a contiguous H x W plane.
    std::vector<double> plane(int c) const;

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t index(int y, int x, int c) const noexcept
    {
        return (std::size_t(y) * std::size_t(width_) + std::size_t(x)) * std::size_t(channels_) +
               std::size_t(c);
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

/// Per-pixel boolean raster; true marks skin.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int height, int width, bool fill = false);
    BinaryMask(int height, int width, std::vector<std::uint8_t> bits);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t size() const noexcept { return bits_.size(); }

    bool at(int y, int x) const { return bits_[std::size_t(y) * std::size_t(width_) + std::size_t(x)] != 0; }
    void set(int y, int x, bool v) { bits_[std::size_t(y) * std::size_t(width_) + std::size_t(x)] = v ? 1 : 0; }
    bool operator[](std::size_t i) const { return bits_[i] != 0; }

    std::span<const std::uint8_t> bits() const noexcept { return bits_; }
    std::size_t count() const noexcept;
    BinaryMask complement() const;

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<std::uint8_t> bits_;
};

/// H x W skin-presence probabilities in [0,1].
class ProbMap {
public:
    ProbMap() = default;
    ProbMap(int height, int width, double fill = 0.0);
    ProbMap(int height, int width, std::vector<double> values);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t size() const noexcept { return values_.size(); }

    double at(int y, int x) const { return values_[std::size_t(y) * std::size_t(width_) + std::size_t(x)]; }
    double& at(int y, int x) { return values_[std::size_t(y) * std::size_t(width_) + std::size_t(x)]; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }

    std::span<const double> values() const noexcept { return values_; }

    /// Single-channel image view of the map, e.g. for export as PGM.
    Image to_image() const;
    static ProbMap from_image(const Image& img);

    friend bool operator==(const ProbMap&, const ProbMap&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<double> values_;
};

enum class PnmFormat { P5, P6 };

/// Decodes binary PGM (P5) / PPM (P6) with maxval 255. Throws ParseError with a
/// kind distinguishing malformed headers, truncated payloads and unsupported maxval.
Image decode_image(std::span<const std::uint8_t> bytes, PnmFormat format);
/// Same, with the format taken from the magic number.
Image decode_image(std::span<const std::uint8_t> bytes);

/// 3-channel images become P6, 1-channel P5. Values are quantized with round-half-up.
std::vector<std::uint8_t> encode_image(const Image& img);

Image read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& img);

/// Masks are stored as P5; any value >= 0.5 decodes as skin.
BinaryMask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const BinaryMask& mask);

ProbMap read_prob_map(const std::filesystem::path& path);
void write_prob_map(const std::filesystem::path& path, const ProbMap& map);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// BT.601 luma: y = 0.299 R + 0.587 G + 0.114 B.
Image to_grayscale(const Image& img);

/// Bilinear, aspect-preserving shrink so that max(H, W) <= max_side. Images that
/// already fit are returned unchanged.
Image downsample_max_side(const Image& img, int max_side);
/// Nearest-neighbour counterpart for masks; output dimensions match downsample_max_side.
BinaryMask downsample_max_side(const BinaryMask& mask, int max_side);

}  // namespace skinseg
