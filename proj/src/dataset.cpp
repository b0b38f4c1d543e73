#include "skinseg/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include <json.hpp>

#include "skinseg/error.hpp"

namespace skinseg {

namespace {

using Rng = std::mt19937_64;
using Rgb = std::array<double, 3>;

double uniform(Rng& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(Rng& rng, int lo, int hi)
{
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

Rgb skin_tone(Rng& rng)
{
    const double r = uniform(rng, 0.40, 0.95);
    const double g = r * uniform(rng, 0.62, 0.82);
    const double b = g * uniform(rng, 0.70, 0.92);
    return {r, g, b};
}

// Colours whose channel ordering never matches skin (R > G > B).
Rgb off_tone(Rng& rng)
{
    const double lum = uniform(rng, 0.30, 0.85);
    switch (uniform_int(rng, 0, 3)) {
    case 0:  // greenish
        return {lum * uniform(rng, 0.5, 0.8), lum, lum * uniform(rng, 0.4, 0.8)};
    case 1:  // bluish
        return {lum * uniform(rng, 0.4, 0.7), lum * uniform(rng, 0.6, 0.9), lum};
    case 2:  // purple
        return {lum * uniform(rng, 0.7, 0.9), lum * uniform(rng, 0.3, 0.5), lum};
    default:  // neutral gray
        return {lum, lum, lum * uniform(rng, 0.98, 1.0)};
    }
}

Rgb background_tone(Rng& rng)
{
    // Mostly arbitrary colours, occasionally warm ones that fool a colour model.
    if (uniform(rng, 0.0, 1.0) < 0.25) {
        const double r = uniform(rng, 0.35, 0.8);
        return {r, r * uniform(rng, 0.65, 0.85), r * uniform(rng, 0.4, 0.65)};
    }
    return {uniform(rng, 0.05, 0.9), uniform(rng, 0.05, 0.9), uniform(rng, 0.05, 0.9)};
}

struct Ellipse {
    double cy, cx, ry, rx, angle;

    // Normalised radial coordinate; <= 1 inside.
    double radius2(double y, double x) const
    {
        const double dy = y - cy, dx = x - cx;
        const double c = std::cos(angle), s = std::sin(angle);
        const double u = (dx * c + dy * s) / rx;
        const double v = (-dx * s + dy * c) / ry;
        return u * u + v * v;
    }
};

Ellipse random_ellipse(Rng& rng, int size, double min_frac, double max_frac)
{
    Ellipse e{};
    e.ry = uniform(rng, min_frac, max_frac) * size;
    e.rx = uniform(rng, min_frac, max_frac) * size;
    const double r = std::max(e.ry, e.rx);
    e.cy = uniform(rng, std::min(r, size / 2.0), std::max(size - r, size / 2.0));
    e.cx = uniform(rng, std::min(r, size / 2.0), std::max(size - r, size / 2.0));
    e.angle = uniform(rng, 0.0, std::numbers::pi);
    return e;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Smooth dome shading across the shape with a linear light direction.
double smooth_shade(const Ellipse& e, double r2, double y, double x, double ly, double lx, int size)
{
    return 0.82 + 0.14 * (1.0 - r2) + 0.08 * ((y - e.cy) * ly + (x - e.cx) * lx) / size;
}

SamplePair make_sample(int size, std::uint64_t seed, int index)
{
    std::seed_seq seq{std::uint32_t(seed & 0xffffffffu), std::uint32_t(seed >> 32), std::uint32_t(index)};
    Rng rng(seq);
    std::normal_distribution<double> noise(0.0, 1.0);

    std::vector<double> px(std::size_t(size) * std::size_t(size) * 3);
    std::vector<std::uint8_t> truth(std::size_t(size) * std::size_t(size), 0);
    auto put = [&](int y, int x, const Rgb& c) {
        const std::size_t i = (std::size_t(y) * std::size_t(size) + std::size_t(x)) * 3;
        for (int k = 0; k < 3; ++k)
            px[i + std::size_t(k)] = clamp01(c[std::size_t(k)]);
    };

    // Background: colour plus gradient plus per-pixel noise.
    const Rgb bg = background_tone(rng);
    const double gy = uniform(rng, -0.15, 0.15), gx = uniform(rng, -0.15, 0.15);
    const double bg_sigma = uniform(rng, 0.03, 0.07);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double shade = 1.0 + gy * (y / double(size) - 0.5) + gx * (x / double(size) - 0.5);
            Rgb c;
            for (int k = 0; k < 3; ++k)
                c[std::size_t(k)] = bg[std::size_t(k)] * shade + bg_sigma * noise(rng);
            put(y, x, c);
        }

    const double ly = uniform(rng, -1.0, 1.0), lx = uniform(rng, -1.0, 1.0);

    // Colour decoys: skin-toned but textured with a fine stripe/checker pattern.
    const int n_color_decoys = uniform_int(rng, 0, 2);
    for (int d = 0; d < n_color_decoys; ++d) {
        const Ellipse e = random_ellipse(rng, size, 0.08, 0.2);
        const Rgb tone = skin_tone(rng);
        const int period = uniform_int(rng, 2, 3);
        const int pattern = uniform_int(rng, 0, 2);
        const double amp = uniform(rng, 0.18, 0.32);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double r2 = e.radius2(y, x);
                if (r2 > 1.0)
                    continue;
                int phase = 0;
                if (pattern == 0)
                    phase = (y / period) % 2;
                else if (pattern == 1)
                    phase = (x / period) % 2;
                else
                    phase = ((y / period) + (x / period)) % 2;
                const double tex = 1.0 + amp * (phase ? 1.0 : -1.0) + 0.05 * noise(rng);
                Rgb c;
                for (int k = 0; k < 3; ++k)
                    c[std::size_t(k)] = tone[std::size_t(k)] * tex;
                put(y, x, c);
            }
    }

    // Texture decoys: smooth shading identical to skin, but off-tone colour.
    const int n_texture_decoys = uniform_int(rng, 0, 2);
    for (int d = 0; d < n_texture_decoys; ++d) {
        const Ellipse e = random_ellipse(rng, size, 0.08, 0.2);
        const Rgb tone = off_tone(rng);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double r2 = e.radius2(y, x);
                if (r2 > 1.0)
                    continue;
                const double shade = smooth_shade(e, r2, y, x, ly, lx, size);
                Rgb c;
                for (int k = 0; k < 3; ++k)
                    c[std::size_t(k)] = tone[std::size_t(k)] * shade + 0.008 * noise(rng);
                put(y, x, c);
            }
    }

    // Skin: drawn last so the truth mask is exactly the union of these ellipses.
    const int n_skin = uniform_int(rng, 1, 3);
    for (int s = 0; s < n_skin; ++s) {
        const Ellipse e = random_ellipse(rng, size, 0.1, 0.22);
        const Rgb tone = skin_tone(rng);
        bool drawn = false;
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double r2 = e.radius2(y, x);
                if (r2 > 1.0)
                    continue;
                const double shade = smooth_shade(e, r2, y, x, ly, lx, size);
                Rgb c;
                for (int k = 0; k < 3; ++k)
                    c[std::size_t(k)] = tone[std::size_t(k)] * shade + 0.008 * noise(rng);
                put(y, x, c);
                truth[std::size_t(y) * std::size_t(size) + std::size_t(x)] = 1;
                drawn = true;
            }
        if (!drawn) {
            // Degenerate sampling cannot happen for size >= 32, but keep the class non-empty.
            const int cy = std::clamp(int(e.cy), 0, size - 1), cx = std::clamp(int(e.cx), 0, size - 1);
            truth[std::size_t(cy) * std::size_t(size) + std::size_t(cx)] = 1;
        }
    }

    char id[32];
    std::snprintf(id, sizeof id, "syn_%05d", index);
    return SamplePair{Image(size, size, 3, std::move(px)), BinaryMask(size, size, std::move(truth)), id};
}

}  // namespace

std::vector<SamplePair> generate_synthetic_dataset(int n, int size, std::uint64_t seed)
{
    if (n < 1)
        throw ContractError("synthetic dataset needs n >= 1");
    if (size < 32)
        throw ContractError("synthetic dataset needs size >= 32");
    std::vector<SamplePair> out;
    out.reserve(std::size_t(n));
    for (int i = 0; i < n; ++i)
        out.push_back(make_sample(size, seed, i));
    return out;
}

DatasetSplit split_dataset(const std::vector<std::string>& ids, std::array<double, 3> fractions, std::uint64_t seed)
{
    if (ids.empty())
        throw ContractError("cannot split an empty dataset");
    for (double f : fractions)
        if (!(f > 0.0))
            throw ContractError("split fractions must be positive");
    if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9)
        throw ContractError("split fractions must sum to 1");

    std::vector<std::string> order = ids;
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    const std::size_t n = order.size();
    const auto n_val = std::size_t(std::llround(double(n) * fractions[1]));
    const auto n_test = std::size_t(std::llround(double(n) * fractions[2]));
    if (n_val + n_test > n)
        throw ContractError("split fractions leave no room for the training set");
    const std::size_t n_train = n - n_val - n_test;

    DatasetSplit split;
    split.seed = seed;
    split.train.assign(order.begin(), order.begin() + std::ptrdiff_t(n_train));
    split.validation.assign(order.begin() + std::ptrdiff_t(n_train), order.begin() + std::ptrdiff_t(n_train + n_val));
    split.test.assign(order.begin() + std::ptrdiff_t(n_train + n_val), order.end());
    return split;
}

DatasetSplit split_dataset(const std::vector<SamplePair>& samples, std::array<double, 3> fractions, std::uint64_t seed)
{
    std::vector<std::string> ids;
    ids.reserve(samples.size());
    for (const auto& s : samples)
        ids.push_back(s.id);
    return split_dataset(ids, fractions, seed);
}

namespace {

nlohmann::json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(ParseErrorKind::BadFormat, path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path)
{
    const auto j = read_json(path);
    if (!j.is_array())
        throw ParseError(ParseErrorKind::BadFormat, "manifest must be a JSON array");
    const auto base = path.parent_path();
    std::vector<ManifestRecord> out;
    std::set<std::string> seen;
    try {
        for (const auto& rec : j) {
            ManifestRecord r;
            r.id = rec.at("id").get<std::string>();
            r.image_path = rec.at("image_path").get<std::string>();
            r.mask_path = rec.at("mask_path").get<std::string>();
            if (r.image_path.is_relative())
                r.image_path = base / r.image_path;
            if (r.mask_path.is_relative())
                r.mask_path = base / r.mask_path;
            if (!seen.insert(r.id).second)
                throw ContractError("duplicate id in manifest: " + r.id);
            out.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(ParseErrorKind::BadFormat, "manifest record: " + std::string(e.what()));
    }
    return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records)
{
    auto j = nlohmann::json::array();
    for (const auto& r : records)
        j.push_back({{"id", r.id}, {"image_path", r.image_path.generic_string()}, {"mask_path", r.mask_path.generic_string()}});
    write_json(path, j);
}

std::vector<SamplePair> load_samples(const std::filesystem::path& manifest_path)
{
    std::vector<SamplePair> out;
    for (const auto& rec : read_manifest(manifest_path)) {
        SamplePair s{read_image(rec.image_path), read_mask(rec.mask_path), rec.id};
        if (s.image.height() != s.truth.height() || s.image.width() != s.truth.width())
            throw ContractError("image and mask sizes differ for sample " + rec.id);
        out.push_back(std::move(s));
    }
    return out;
}

void save_dataset(const std::filesystem::path& dir, const std::vector<SamplePair>& samples)
{
    std::vector<ManifestRecord> records;
    for (const auto& s : samples) {
        ManifestRecord r{s.id, std::filesystem::path("images") / (s.id + ".ppm"),
                         std::filesystem::path("masks") / (s.id + ".pgm")};
        write_image(dir / r.image_path, s.image);
        write_mask(dir / r.mask_path, s.truth);
        records.push_back(std::move(r));
    }
    write_manifest(dir / "manifest.json", records);
}

DatasetSplit read_split(const std::filesystem::path& path)
{
    const auto j = read_json(path);
    DatasetSplit s;
    try {
        s.seed = j.at("seed").get<std::uint64_t>();
        s.train = j.at("train").get<std::vector<std::string>>();
        s.validation = j.at("validation").get<std::vector<std::string>>();
        s.test = j.at("test").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(ParseErrorKind::BadFormat, "split file: " + std::string(e.what()));
    }
    return s;
}

void write_split(const std::filesystem::path& path, const DatasetSplit& split)
{
    write_json(path, {{"seed", split.seed}, {"train", split.train}, {"validation", split.validation}, {"test", split.test}});
}

std::vector<SamplePair> select_samples(const std::vector<SamplePair>& samples, const std::vector<std::string>& ids)
{
    std::vector<SamplePair> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = std::find_if(samples.begin(), samples.end(), [&](const SamplePair& s) { return s.id == id; });
        if (it == samples.end())
            throw ContractError("split references unknown sample id " + id);
        out.push_back(*it);
    }
    return out;
}

}  // namespace skinseg
