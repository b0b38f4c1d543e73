#include "skinseg/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "binio.hpp"
#include "skinseg/error.hpp"

namespace skinseg::bayes {

std::array<int, 3> quantize_color(std::array<double, 3> rgb, int bins)
{
    if (bins < 2)
        throw ContractError("histogram needs at least 2 bins per channel");
    std::array<int, 3> idx{};
    for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(rgb[c], 0.0, 1.0);
        idx[c] = std::min(int(std::floor(v * bins)), bins - 1);
    }
    return idx;
}

ColorHistogramPair empty_histograms(int bins)
{
    if (bins < 2 || bins > 256)
        throw ContractError("bins per channel must be in [2, 256]");
    ColorHistogramPair h;
    h.bins_per_channel = bins;
    const std::size_t cells = std::size_t(bins) * std::size_t(bins) * std::size_t(bins);
    h.skin_counts.assign(cells, 0);
    h.nonskin_counts.assign(cells, 0);
    return h;
}

ColorHistogramPair fit_histograms(std::span<const SamplePair> samples, int bins)
{
    ColorHistogramPair h = empty_histograms(bins);
    for (const auto& s : samples) {
        if (s.image.channels() != 3)
            throw ContractError("colour histograms need 3-channel images (sample " + s.id + ")");
        if (s.image.height() != s.truth.height() || s.image.width() != s.truth.width())
            throw ContractError("image/mask size mismatch in sample " + s.id);
        const auto px = s.image.data();
        for (std::size_t i = 0; i < s.image.pixel_count(); ++i) {
            const auto cell = h.cell(quantize_color({px[3 * i], px[3 * i + 1], px[3 * i + 2]}, bins));
            if (s.truth[i]) {
                ++h.skin_counts[cell];
                ++h.n_skin;
            } else {
                ++h.nonskin_counts[cell];
                ++h.n_nonskin;
            }
        }
    }
    return h;
}

namespace {

void check_ready(const ColorHistogramPair& hist, const PosteriorOptions& opts)
{
    if (hist.n_skin == 0 || hist.n_nonskin == 0)
        throw ContractError("posterior undefined: a colour class has no training pixels");
    if (!(opts.priors.skin > 0.0) || !(opts.priors.nonskin > 0.0) ||
        std::abs(opts.priors.skin + opts.priors.nonskin - 1.0) > 1e-9)
        throw ContractError("priors must be positive and sum to 1");
    if (!(opts.alpha >= 0.0))
        throw ContractError("smoothing alpha must be non-negative");
}

double posterior_at(const ColorHistogramPair& hist, std::size_t cell, const PosteriorOptions& opts)
{
    const double cells = std::pow(double(hist.bins_per_channel), 3);
    const double like_s = (double(hist.skin_counts[cell]) + opts.alpha) / (double(hist.n_skin) + opts.alpha * cells);
    const double like_ns =
        (double(hist.nonskin_counts[cell]) + opts.alpha) / (double(hist.n_nonskin) + opts.alpha * cells);
    const double num = like_s * opts.priors.skin;
    const double den = num + like_ns * opts.priors.nonskin;
    if (den == 0.0)
        return opts.priors.skin;
    return num / den;
}

}  // namespace

double posterior(const ColorHistogramPair& hist, std::array<double, 3> rgb, const PosteriorOptions& opts)
{
    check_ready(hist, opts);
    return posterior_at(hist, hist.cell(quantize_color(rgb, hist.bins_per_channel)), opts);
}

ProbMap bc_prob_map(const ColorHistogramPair& hist, const Image& img, const PosteriorOptions& opts)
{
    check_ready(hist, opts);
    if (img.channels() != 3)
        throw ContractError("Bayesian classifier expects a 3-channel image");
    const auto px = img.data();
    std::vector<double> out(img.pixel_count());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = posterior_at(
            hist, hist.cell(quantize_color({px[3 * i], px[3 * i + 1], px[3 * i + 2]}, hist.bins_per_channel)), opts);
    return ProbMap(img.height(), img.width(), std::move(out));
}

BinaryMask binarize(const ProbMap& map, double threshold)
{
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw ContractError("binarization threshold must lie in [0,1]");
    std::vector<std::uint8_t> bits(map.size());
    for (std::size_t i = 0; i < bits.size(); ++i)
        bits[i] = map[i] >= threshold ? 1 : 0;
    return BinaryMask(map.height(), map.width(), std::move(bits));
}

std::vector<std::uint8_t> serialize(const ColorHistogramPair& hist)
{
    detail::ByteWriter w;
    w.raw("BCH1");
    w.uint(std::uint32_t(hist.bins_per_channel));
    for (auto c : hist.skin_counts)
        w.uint(std::uint64_t(c));
    for (auto c : hist.nonskin_counts)
        w.uint(std::uint64_t(c));
    w.uint(std::uint64_t(hist.n_skin));
    w.uint(std::uint64_t(hist.n_nonskin));
    return w.take();
}

ColorHistogramPair deserialize(std::span<const std::uint8_t> bytes)
{
    detail::ByteReader r(bytes);
    if (r.raw(4, "magic") != "BCH1")
        throw ParseError(ParseErrorKind::BadMagic, "not a BCH1 histogram file");
    const auto bins = r.uint<std::uint32_t>("bins");
    if (bins < 2 || bins > 256)
        throw ParseError(ParseErrorKind::BadFormat, "histogram bins out of range: " + std::to_string(bins));
    ColorHistogramPair h = empty_histograms(int(bins));
    for (auto& c : h.skin_counts)
        c = r.uint<std::uint64_t>("skin counts");
    for (auto& c : h.nonskin_counts)
        c = r.uint<std::uint64_t>("non-skin counts");
    h.n_skin = r.uint<std::uint64_t>("n_skin");
    h.n_nonskin = r.uint<std::uint64_t>("n_nonskin");

    std::uint64_t s = 0, ns = 0;
    for (auto c : h.skin_counts)
        s += c;
    for (auto c : h.nonskin_counts)
        ns += c;
    if (s != h.n_skin || ns != h.n_nonskin)
        throw ParseError(ParseErrorKind::BadFormat, "histogram totals do not match their counts");
    return h;
}

void save_histograms(const std::filesystem::path& path, const ColorHistogramPair& hist)
{
    write_file_bytes(path, serialize(hist));
}

ColorHistogramPair load_histograms(const std::filesystem::path& path)
{
    return deserialize(read_file_bytes(path));
}

}  // namespace skinseg::bayes
