#include <doctest.h>

#include <filesystem>
#include <random>
#include <string>

#include "skinseg/error.hpp"
#include "skinseg/imgio.hpp"

using namespace skinseg;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& header, std::vector<std::uint8_t> payload = {})
{
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

ParseErrorKind parse_kind(const std::vector<std::uint8_t>& bytes)
{
    try {
        decode_image(bytes);
    } catch (const ParseError& e) {
        return e.kind();
    }
    FAIL("expected a parse error");
    return ParseErrorKind::BadFormat;
}

Image random_quantized(std::mt19937_64& rng, int h, int w, int c)
{
    std::uniform_int_distribution<int> level(0, 255);
    std::vector<double> v(std::size_t(h) * std::size_t(w) * std::size_t(c));
    for (auto& x : v)
        x = level(rng) / 255.0;
    return Image(h, w, c, std::move(v));
}

}  // namespace

TEST_CASE("decode maps maxval to one")
{
    const Image img = decode_image(bytes_of("P5 1 1 255\n", {0xFF}), PnmFormat::P5);
    CHECK(img.height() == 1);
    CHECK(img.width() == 1);
    CHECK(img.channels() == 1);
    CHECK(img.at(0, 0) == 1.0);
}

TEST_CASE("decode P6 endpoints")
{
    const Image img = decode_image(bytes_of("P6 2 1 255\n", {0, 0, 0, 255, 255, 255}), PnmFormat::P6);
    CHECK(img.height() == 1);
    CHECK(img.width() == 2);
    CHECK(img.channels() == 3);
    const std::vector<double> expect{0, 0, 0, 1, 1, 1};
    CHECK(std::vector<double>(img.data().begin(), img.data().end()) == expect);
}

TEST_CASE("decode errors are distinct")
{
    CHECK(parse_kind(bytes_of("P6 4 4 255\n", std::vector<std::uint8_t>(9, 7))) == ParseErrorKind::Truncated);
    CHECK(parse_kind(bytes_of("P5 2 2 65535\n", std::vector<std::uint8_t>(8, 0))) == ParseErrorKind::UnsupportedMaxval);
    CHECK(parse_kind(bytes_of("P5 2 x 255\n", {1, 2, 3, 4})) == ParseErrorKind::MalformedHeader);
    CHECK(parse_kind(bytes_of("P5 2")) == ParseErrorKind::MalformedHeader);
    CHECK(parse_kind(bytes_of("P3 1 1 255\n1 2 3")) == ParseErrorKind::MalformedHeader);
    CHECK_THROWS_AS(decode_image(bytes_of("P6 1 1 255\n", {1, 2, 3}), PnmFormat::P5), ParseError);
}

TEST_CASE("header comments are skipped")
{
    const Image img = decode_image(bytes_of("P5\n# made by hand\n2 1\n255\n", {0, 51}));
    CHECK(img.width() == 2);
    CHECK(img.at(0, 1) == doctest::Approx(0.2));
}

TEST_CASE("encode rounds half up")
{
    const auto bytes = encode_image(Image(1, 1, 1, 0.5));
    CHECK(bytes.back() == 128);
    const auto rgb = encode_image(Image(1, 1, 3, std::vector<double>{1, 0, 1}));
    REQUIRE(rgb.size() >= 3);
    CHECK(rgb[rgb.size() - 3] == 255);
    CHECK(rgb[rgb.size() - 2] == 0);
    CHECK(rgb[rgb.size() - 1] == 255);
    CHECK(std::string(rgb.begin(), rgb.begin() + 2) == "P6");
    CHECK(std::string(bytes.begin(), bytes.begin() + 2) == "P5");
}

TEST_CASE("codec round trip is exact on quantized images")
{
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 40; ++trial) {
        const int h = 1 + int(rng() % 9), w = 1 + int(rng() % 9), c = rng() % 2 ? 3 : 1;
        const Image img = random_quantized(rng, h, w, c);
        CHECK(decode_image(encode_image(img)) == img);
    }
}

TEST_CASE("round trip of arbitrary values is within one quantum")
{
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> v(5 * 7 * 3);
    for (auto& x : v)
        x = u(rng);
    const Image img(5, 7, 3, v);
    const Image back = decode_image(encode_image(img));
    for (std::size_t i = 0; i < v.size(); ++i)
        CHECK(std::abs(back.data()[i] - v[i]) <= 0.5 / 255.0 + 1e-12);
}

TEST_CASE("to_grayscale uses BT.601 weights")
{
    CHECK(to_grayscale(Image(1, 1, 3, std::vector<double>{1, 1, 1})).at(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(to_grayscale(Image(1, 1, 3, std::vector<double>{1, 0, 0})).at(0, 0) == doctest::Approx(0.299).epsilon(1e-15));
    CHECK(to_grayscale(Image(1, 1, 3, std::vector<double>{0, 0, 0})).at(0, 0) == 0.0);
    CHECK_THROWS_AS(to_grayscale(Image(1, 1, 1, 0.3)), ContractError);
}

TEST_CASE("to_grayscale range and neutral pixels")
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 500; ++i) {
        const double r = u(rng), g = u(rng), b = u(rng);
        const double y = to_grayscale(Image(1, 1, 3, std::vector<double>{r, g, b})).at(0, 0);
        CHECK(y >= 0.0);
        CHECK(y <= 1.0);
        const double gray = to_grayscale(Image(1, 1, 3, std::vector<double>{r, r, r})).at(0, 0);
        CHECK(gray == doctest::Approx(r).epsilon(1e-12));
    }
}

TEST_CASE("downsample_max_side keeps the aspect ratio")
{
    const Image wide(256, 512, 3, 0.25);
    const Image a = downsample_max_side(wide, 256);
    CHECK(a.height() == 128);
    CHECK(a.width() == 256);
    const Image b = downsample_max_side(Image(100, 200, 3, 0.5), 256);
    CHECK(b.height() == 100);
    CHECK(b.width() == 200);
    const Image c = downsample_max_side(Image(1024, 1024, 1, 0.75), 256);
    CHECK(c.height() == 256);
    CHECK(c.width() == 256);
    // Constant images stay constant under bilinear resampling.
    for (double v : c.data())
        CHECK(v == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("downsample never grows and is idempotent")
{
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const int h = 1 + int(rng() % 90), w = 1 + int(rng() % 90), side = 1 + int(rng() % 60);
        const Image img = random_quantized(rng, h, w, 3);
        const Image once = downsample_max_side(img, side);
        CHECK(once.height() <= h);
        CHECK(once.width() <= w);
        CHECK(std::max(once.height(), once.width()) <= side);
        CHECK(downsample_max_side(once, side) == once);
        const BinaryMask m(h, w, true);
        const BinaryMask md = downsample_max_side(m, side);
        CHECK(md.height() == once.height());
        CHECK(md.width() == once.width());
    }
}

TEST_CASE("file helpers round trip masks and probability maps")
{
    const auto dir = std::filesystem::temp_directory_path() / "skinseg_test_imgio";
    std::filesystem::remove_all(dir);
    BinaryMask m(2, 3, std::vector<std::uint8_t>{1, 0, 1, 0, 0, 1});
    write_mask(dir / "nested" / "m.pgm", m);
    CHECK(read_mask(dir / "nested" / "m.pgm") == m);
    ProbMap p(1, 3, std::vector<double>{0.0, 128.0 / 255.0, 1.0});
    write_prob_map(dir / "p.pgm", p);
    CHECK(read_prob_map(dir / "p.pgm") == p);
    CHECK_THROWS_AS(read_image(dir / "missing.ppm"), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("constructors validate their invariants")
{
    CHECK_THROWS_AS(Image(0, 3, 3), ContractError);
    CHECK_THROWS_AS(Image(1, 1, 3, std::vector<double>{0.1, 2.0, 0.3}), ContractError);
    CHECK_THROWS_AS(BinaryMask(1, 2, std::vector<std::uint8_t>{0, 2}), ContractError);
    CHECK_THROWS_AS(ProbMap(1, 1, 1.5), ContractError);
    CHECK(BinaryMask(2, 2, std::vector<std::uint8_t>{1, 0, 0, 1}).complement().count() == 2);
}
