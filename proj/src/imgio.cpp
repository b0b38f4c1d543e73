#include "skinseg/imgio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "skinseg/error.hpp"

namespace skinseg {

namespace {

void check_dims(int height, int width)
{
    if (height <= 0 || width <= 0)
        throw ContractError("raster dimensions must be positive, got " + std::to_string(height) + "x" +
                            std::to_string(width));
}

void check_unit_interval(std::span<const double> values)
{
    for (double v : values)
        if (!(v >= 0.0 && v <= 1.0))
            throw ContractError("intensity outside [0,1]: " + std::to_string(v));
}

std::uint8_t quantize(double v)
{
    return static_cast<std::uint8_t>(std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5));
}

class HeaderReader {
public:
    explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    void skip_space_and_comments()
    {
        while (pos_ < bytes_.size()) {
            const char c = static_cast<char>(bytes_[pos_]);
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n')
                    ++pos_;
            } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
                ++pos_;
            } else {
                break;
            }
        }
    }

    long read_uint(const char* field)
    {
        skip_space_and_comments();
        long value = 0;
        std::size_t digits = 0;
        while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
            value = value * 10 + (bytes_[pos_] - '0');
            if (value > 1'000'000'000L)
                throw ParseError(ParseErrorKind::MalformedHeader, std::string("header field too large: ") + field);
            ++pos_;
            ++digits;
        }
        if (digits == 0)
            throw ParseError(ParseErrorKind::MalformedHeader, std::string("missing header field: ") + field);
        return value;
    }

    // Exactly one whitespace byte separates maxval from the raster.
    void expect_single_space()
    {
        if (pos_ >= bytes_.size())
            throw ParseError(ParseErrorKind::Truncated, "missing raster after header");
        const char c = static_cast<char>(bytes_[pos_]);
        if (!(c == ' ' || c == '\t' || c == '\n' || c == '\r'))
            throw ParseError(ParseErrorKind::MalformedHeader, "expected whitespace after maxval");
        ++pos_;
    }

    std::size_t pos() const { return pos_; }
    void advance(std::size_t n) { pos_ += n; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

PnmFormat sniff_format(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 2 || bytes[0] != 'P')
        throw ParseError(ParseErrorKind::MalformedHeader, "not a binary PNM file");
    if (bytes[1] == '5')
        return PnmFormat::P5;
    if (bytes[1] == '6')
        return PnmFormat::P6;
    throw ParseError(ParseErrorKind::MalformedHeader, "unsupported PNM magic");
}

}  // namespace

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels)
{
    check_dims(height, width);
    if (channels < 1)
        throw ContractError("image needs at least one channel");
    if (!(fill >= 0.0 && fill <= 1.0))
        throw ContractError("fill value outside [0,1]");
    data_.assign(pixel_count() * std::size_t(channels), fill);
}

Image::Image(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data))
{
    check_dims(height, width);
    if (channels < 1)
        throw ContractError("image needs at least one channel");
    if (data_.size() != pixel_count() * std::size_t(channels))
        throw ContractError("image data length does not match height*width*channels");
    check_unit_interval(data_);
}

std::vector<double> Image::plane(int c) const
{
    if (c < 0 || c >= channels_)
        throw ContractError("channel index out of range");
    std::vector<double> out(pixel_count());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = data_[i * std::size_t(channels_) + std::size_t(c)];
    return out;
}

BinaryMask::BinaryMask(int height, int width, bool fill)
    : height_(height), width_(width)
{
    check_dims(height, width);
    bits_.assign(std::size_t(height) * std::size_t(width), fill ? 1 : 0);
}

BinaryMask::BinaryMask(int height, int width, std::vector<std::uint8_t> bits)
    : height_(height), width_(width), bits_(std::move(bits))
{
    check_dims(height, width);
    if (bits_.size() != std::size_t(height) * std::size_t(width))
        throw ContractError("mask length does not match height*width");
    for (auto& b : bits_)
        if (b > 1)
            throw ContractError("mask values must be 0 or 1");
}

std::size_t BinaryMask::count() const noexcept
{
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BinaryMask BinaryMask::complement() const
{
    BinaryMask out = *this;
    for (auto& b : out.bits_)
        b = b ? 0 : 1;
    return out;
}

ProbMap::ProbMap(int height, int width, double fill)
    : height_(height), width_(width)
{
    check_dims(height, width);
    if (!(fill >= 0.0 && fill <= 1.0))
        throw ContractError("probability fill outside [0,1]");
    values_.assign(std::size_t(height) * std::size_t(width), fill);
}

ProbMap::ProbMap(int height, int width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values))
{
    check_dims(height, width);
    if (values_.size() != std::size_t(height) * std::size_t(width))
        throw ContractError("probability map length does not match height*width");
    check_unit_interval(values_);
}

Image ProbMap::to_image() const
{
    return Image(height_, width_, 1, values_);
}

ProbMap ProbMap::from_image(const Image& img)
{
    if (img.channels() != 1)
        throw ContractError("probability map must come from a single-channel image");
    return ProbMap(img.height(), img.width(), std::vector<double>(img.data().begin(), img.data().end()));
}

Image decode_image(std::span<const std::uint8_t> bytes, PnmFormat format)
{
    if (sniff_format(bytes) != format)
        throw ParseError(ParseErrorKind::MalformedHeader, "PNM magic does not match the requested format");
    HeaderReader reader(bytes);
    reader.advance(2);
    const long width = reader.read_uint("width");
    const long height = reader.read_uint("height");
    const long maxval = reader.read_uint("maxval");
    if (width <= 0 || height <= 0)
        throw ParseError(ParseErrorKind::MalformedHeader, "zero image dimension");
    if (maxval != 255)
        throw ParseError(ParseErrorKind::UnsupportedMaxval, "unsupported maxval " + std::to_string(maxval));
    reader.expect_single_space();

    const int channels = format == PnmFormat::P6 ? 3 : 1;
    const std::size_t expected = std::size_t(width) * std::size_t(height) * std::size_t(channels);
    if (bytes.size() - reader.pos() < expected)
        throw ParseError(ParseErrorKind::Truncated, "raster truncated: expected " + std::to_string(expected) +
                                                        " bytes, found " + std::to_string(bytes.size() - reader.pos()));

    std::vector<double> data(expected);
    for (std::size_t i = 0; i < expected; ++i)
        data[i] = bytes[reader.pos() + i] / 255.0;
    return Image(int(height), int(width), channels, std::move(data));
}

Image decode_image(std::span<const std::uint8_t> bytes)
{
    return decode_image(bytes, sniff_format(bytes));
}

std::vector<std::uint8_t> encode_image(const Image& img)
{
    if (img.channels() != 1 && img.channels() != 3)
        throw ContractError("only 1- or 3-channel images can be encoded");
    const std::string header = std::string(img.channels() == 3 ? "P6" : "P5") + "\n" +
                               std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + img.data().size());
    for (double v : img.data())
        out.push_back(quantize(v));
    return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out)
        throw IoError("write failed for " + path.string());
}

Image read_image(const std::filesystem::path& path)
{
    return decode_image(read_file_bytes(path));
}

void write_image(const std::filesystem::path& path, const Image& img)
{
    write_file_bytes(path, encode_image(img));
}

BinaryMask read_mask(const std::filesystem::path& path)
{
    const Image img = decode_image(read_file_bytes(path), PnmFormat::P5);
    std::vector<std::uint8_t> bits(img.pixel_count());
    for (std::size_t i = 0; i < bits.size(); ++i)
        bits[i] = img.data()[i] >= 0.5 ? 1 : 0;
    return BinaryMask(img.height(), img.width(), std::move(bits));
}

void write_mask(const std::filesystem::path& path, const BinaryMask& mask)
{
    std::vector<double> values(mask.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        values[i] = mask[i] ? 1.0 : 0.0;
    write_image(path, Image(mask.height(), mask.width(), 1, std::move(values)));
}

ProbMap read_prob_map(const std::filesystem::path& path)
{
    return ProbMap::from_image(decode_image(read_file_bytes(path), PnmFormat::P5));
}

void write_prob_map(const std::filesystem::path& path, const ProbMap& map)
{
    write_image(path, map.to_image());
}

Image to_grayscale(const Image& img)
{
    if (img.channels() != 3)
        throw ContractError("to_grayscale expects a 3-channel image");
    std::vector<double> out(img.pixel_count());
    const auto src = img.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double r = src[3 * i], g = src[3 * i + 1], b = src[3 * i + 2];
        out[i] = std::clamp(0.299 * r + 0.587 * g + 0.114 * b, 0.0, 1.0);
    }
    return Image(img.height(), img.width(), 1, std::move(out));
}

namespace {

struct ScaledDims {
    int height;
    int width;
};

ScaledDims scaled_dims(int height, int width, int max_side)
{
    const double s = double(max_side) / double(std::max(height, width));
    // The longer side lands exactly on max_side; the other is rounded.
    int h = height >= width ? max_side : std::max(1, int(std::lround(height * s)));
    int w = width >= height ? max_side : std::max(1, int(std::lround(width * s)));
    return {h, w};
}

}  // namespace

Image downsample_max_side(const Image& img, int max_side)
{
    if (max_side < 1)
        throw ContractError("max_side must be >= 1");
    if (std::max(img.height(), img.width()) <= max_side)
        return img;

    const auto [oh, ow] = scaled_dims(img.height(), img.width(), max_side);
    const double sy = double(img.height()) / oh;
    const double sx = double(img.width()) / ow;
    const int channels = img.channels();
    std::vector<double> out(std::size_t(oh) * std::size_t(ow) * std::size_t(channels));

    for (int y = 0; y < oh; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(img.height() - 1));
        const int y0 = int(fy);
        const int y1 = std::min(y0 + 1, img.height() - 1);
        const double wy = fy - y0;
        for (int x = 0; x < ow; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(img.width() - 1));
            const int x0 = int(fx);
            const int x1 = std::min(x0 + 1, img.width() - 1);
            const double wx = fx - x0;
            for (int c = 0; c < channels; ++c) {
                const double top = img.at(y0, x0, c) * (1 - wx) + img.at(y0, x1, c) * wx;
                const double bottom = img.at(y1, x0, c) * (1 - wx) + img.at(y1, x1, c) * wx;
                out[(std::size_t(y) * std::size_t(ow) + std::size_t(x)) * std::size_t(channels) + std::size_t(c)] =
                    std::clamp(top * (1 - wy) + bottom * wy, 0.0, 1.0);
            }
        }
    }
    return Image(oh, ow, channels, std::move(out));
}

BinaryMask downsample_max_side(const BinaryMask& mask, int max_side)
{
    if (max_side < 1)
        throw ContractError("max_side must be >= 1");
    if (std::max(mask.height(), mask.width()) <= max_side)
        return mask;

    const auto [oh, ow] = scaled_dims(mask.height(), mask.width(), max_side);
    const double sy = double(mask.height()) / oh;
    const double sx = double(mask.width()) / ow;
    BinaryMask out(oh, ow);
    for (int y = 0; y < oh; ++y) {
        const int sy_i = std::min(int((y + 0.5) * sy), mask.height() - 1);
        for (int x = 0; x < ow; ++x) {
            const int sx_i = std::min(int((x + 0.5) * sx), mask.width() - 1);
            out.set(y, x, mask.at(sy_i, sx_i));
        }
    }
    return out;
}

}  // namespace skinseg
