#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "skinseg/bayes.hpp"
#include "skinseg/error.hpp"

using namespace skinseg;
using namespace skinseg::bayes;

namespace {

// Cell 0 holds (cs, cns); the rest of each class total sits in the last cell.
ColorHistogramPair two_cell(std::uint64_t cs, std::uint64_t ns_total, std::uint64_t cns, std::uint64_t nns_total)
{
    auto h = empty_histograms(2);
    h.skin_counts[0] = cs;
    h.skin_counts[7] = ns_total - cs;
    h.nonskin_counts[0] = cns;
    h.nonskin_counts[7] = nns_total - cns;
    h.n_skin = ns_total;
    h.n_nonskin = nns_total;
    return h;
}

ColorHistogramPair random_hist(std::mt19937_64& rng, int bins)
{
    auto h = empty_histograms(bins);
    std::uniform_int_distribution<int> c(0, 6);
    for (std::size_t i = 0; i < h.skin_counts.size(); ++i) {
        h.skin_counts[i] = std::uint64_t(std::max(0, c(rng) - 3));
        h.nonskin_counts[i] = std::uint64_t(std::max(0, c(rng) - 3));
        h.n_skin += h.skin_counts[i];
        h.n_nonskin += h.nonskin_counts[i];
    }
    h.skin_counts[0] += 1;
    h.nonskin_counts[1] += 1;
    h.n_skin += 1;
    h.n_nonskin += 1;
    return h;
}

Image random_image(std::mt19937_64& rng, int h, int w)
{
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> v(std::size_t(h) * std::size_t(w) * 3);
    for (auto& x : v)
        x = u(rng);
    return Image(h, w, 3, std::move(v));
}

}  // namespace

TEST_CASE("quantize_color")
{
    CHECK(quantize_color({0, 0, 0}, 32) == std::array<int, 3>{0, 0, 0});
    CHECK(quantize_color({1, 1, 1}, 32) == std::array<int, 3>{31, 31, 31});
    CHECK(quantize_color({0.5, 0.25, 0.75}, 4) == std::array<int, 3>{2, 1, 3});
    CHECK_THROWS_AS(quantize_color({0.5, 0.5, 0.5}, 1), ContractError);
}

TEST_CASE("posterior hand-evaluated cases")
{
    CHECK(posterior(two_cell(30, 100, 10, 100), {0, 0, 0}) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(posterior(two_cell(0, 100, 0, 100), {0, 0, 0}) == 0.5);
    CHECK(posterior(two_cell(5, 100, 0, 100), {0, 0, 0}) == 1.0);
    CHECK(posterior(two_cell(0, 100, 0, 100), {0, 0, 0}, {{0.3, 0.7}, 0.0}) == 0.3);
}

TEST_CASE("fit_histograms bookkeeping")
{
    SamplePair one{Image(1, 1, 3, 0.4), BinaryMask(1, 1, true), "a"};
    const auto h1 = fit_histograms(std::span(&one, 1), 32);
    CHECK(h1.n_skin == 1);
    CHECK(h1.n_nonskin == 0);
    CHECK_THROWS_AS(posterior(h1, {0.4, 0.4, 0.4}), ContractError);

    SamplePair two{Image(1, 2, 3, 0.4), BinaryMask(1, 2, std::vector<std::uint8_t>{1, 0}), "b"};
    const auto h2 = fit_histograms(std::span(&two, 1), 32);
    const auto cell = h2.cell(quantize_color({0.4, 0.4, 0.4}, 32));
    CHECK(h2.skin_counts[cell] == 1);
    CHECK(h2.nonskin_counts[cell] == 1);
}

TEST_CASE("fit_histograms is order independent")
{
    auto samples = generate_synthetic_dataset(6, 32, 2);
    const auto a = fit_histograms(samples, 16);
    std::reverse(samples.begin(), samples.end());
    CHECK(fit_histograms(samples, 16) == a);
    std::uint64_t s = 0;
    for (auto c : a.skin_counts)
        s += c;
    CHECK(s == a.n_skin);
}

TEST_CASE("posterior scale invariance and ordering")
{
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 50; ++trial) {
        const auto h = random_hist(rng, 4);
        auto scaled = h;
        const std::uint64_t k = 1 + rng() % 1000;
        for (auto& c : scaled.skin_counts)
            c *= k;
        for (auto& c : scaled.nonskin_counts)
            c *= k;
        scaled.n_skin *= k;
        scaled.n_nonskin *= k;
        for (int i = 0; i < 20; ++i) {
            const std::array<double, 3> rgb{u(rng), u(rng), u(rng)};
            const double p = posterior(h, rgb);
            CHECK(std::abs(posterior(scaled, rgb) - p) <= 1e-12 * std::max(p, 1e-300));
            const auto cell = h.cell(quantize_color(rgb, 4));
            const double ls = double(h.skin_counts[cell]) / double(h.n_skin);
            const double lns = double(h.nonskin_counts[cell]) / double(h.n_nonskin);
            CHECK((p > 0.5) == (ls > lns));
        }
    }
}

TEST_CASE("bc_prob_map agrees with per-pixel evaluation")
{
    std::mt19937_64 rng(9);
    const auto h = random_hist(rng, 8);
    const Image img = random_image(rng, 9, 11);
    const ProbMap m = bc_prob_map(h, img);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            const std::array<double, 3> rgb{img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2)};
            CHECK(m.at(y, x) == posterior(h, rgb));
            const double o = oracle::posterior(h.skin_counts, h.nonskin_counts, h.n_skin, h.n_nonskin, rgb, 8);
            CHECK(m.at(y, x) == doctest::Approx(o).epsilon(1e-12));
            CHECK(m.at(y, x) >= 0.0);
            CHECK(m.at(y, x) <= 1.0);
        }
    const ProbMap flat = bc_prob_map(h, Image(4, 4, 3, 0.3));
    for (double v : flat.values())
        CHECK(v == flat[0]);
}

TEST_CASE("binarize threshold rule")
{
    const ProbMap m(1, 3, std::vector<double>{0.5, 0.49, 0.0});
    const auto b = binarize(m, 0.5);
    CHECK(b[0]);
    CHECK_FALSE(b[1]);
    CHECK(binarize(m, 0.0).count() == 3);
    CHECK_THROWS_AS(binarize(m, 1.0000001), ContractError);
}

TEST_CASE("histogram file round trip and corruption")
{
    std::mt19937_64 rng(10);
    const auto h = random_hist(rng, 4);
    const auto bytes = serialize(h);
    CHECK(deserialize(bytes) == h);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "BCH1");

    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(deserialize(bad_magic), ParseError);
    auto truncated = bytes;
    truncated.resize(bytes.size() - 5);
    CHECK_THROWS_AS(deserialize(truncated), ParseError);
    auto wrong_total = bytes;
    wrong_total.back() ^= 0x01;
    CHECK_THROWS_AS(deserialize(wrong_total), ParseError);

    const auto path = std::filesystem::temp_directory_path() / "skinseg_test_bayes.bch";
    save_histograms(path, h);
    CHECK(load_histograms(path) == h);
    std::filesystem::remove(path);
}

TEST_CASE("additive smoothing is optional and defaults off")
{
    const auto h = two_cell(0, 100, 0, 100);
    CHECK(posterior(h, {0, 0, 0}, {{}, 1.0}) == doctest::Approx(0.5));
    const auto h2 = two_cell(3, 100, 0, 100);
    const double smooth = posterior(h2, {0, 0, 0}, {{}, 1.0});
    CHECK(smooth < 1.0);
    CHECK(smooth > 0.5);
}
