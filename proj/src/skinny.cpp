#include "skinseg/skinny.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>

#include <json.hpp>

#include "binio.hpp"
#include "skinseg/error.hpp"

namespace skinseg::skinny {

namespace {

constexpr std::uint32_t kWeightFormatVersion = 1;
// Single-precision sigmoid saturates to exactly 0 or 1; maps stay strictly inside.
constexpr double kProbFloor = 1e-7;

void add_conv(nn::ParamStore<float>& p, const std::string& name, int in, int out, int k)
{
    p.add(name + ".w", {out, in, k, k});
    p.add(name + ".b", {out});
}

void add_block(nn::ParamStore<float>& p, const NetworkConfig& cfg, const std::string& prefix, int in, int out)
{
    if (cfg.inception) {
        add_conv(p, prefix + ".b1", in, out, 1);
        add_conv(p, prefix + ".b3", in, out, 3);
        add_conv(p, prefix + ".b5", in, out, 5);
        add_conv(p, prefix + ".fuse", (cfg.dense ? in : 0) + 3 * out, out, 1);
        return;
    }
    add_conv(p, prefix + ".conv1", in, out, 3);
    add_conv(p, prefix + ".conv2", out, out, 3);
    if (cfg.dense)
        add_conv(p, prefix + ".fuse", in + out, out, 1);
}

bool parse_bool(std::string_view v, std::string_view key)
{
    if (v == "true" || v == "1" || v == "on")
        return true;
    if (v == "false" || v == "0" || v == "off")
        return false;
    throw ContractError("arch: bad boolean for " + std::string(key) + ": " + std::string(v));
}

template <class I>
I parse_int(std::string_view v, std::string_view key)
{
    I out{};
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw ContractError("arch: bad integer for " + std::string(key) + ": " + std::string(v));
    return out;
}

std::uint64_t fnv1a(std::string_view s)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

int reflect(int i, int n)
{
    if (n == 1)
        return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0)
        i += period;
    return i < n ? i : period - i;
}

}  // namespace

void NetworkConfig::validate() const
{
    if (in_channels < 1)
        throw ContractError("network config: in_channels must be >= 1");
    if (levels < 1 || levels > 12)
        throw ContractError("network config: levels must be in [1, 12]");
    if (base_channels < 1 || (long(base_channels) << (levels - 1)) > (1L << 20))
        throw ContractError("network config: base_channels must be >= 1 and keep widths bounded");
}

NetworkConfig parse_arch(std::string_view arch, NetworkConfig cfg)
{
    while (!arch.empty()) {
        const auto comma = arch.find(',');
        const std::string_view item = arch.substr(0, comma);
        arch = comma == std::string_view::npos ? std::string_view{} : arch.substr(comma + 1);
        if (item.empty())
            continue;
        const auto eq = item.find('=');
        if (eq == std::string_view::npos)
            throw ContractError("arch: expected key=value, got " + std::string(item));
        const auto key = item.substr(0, eq), val = item.substr(eq + 1);
        if (key == "levels")
            cfg.levels = parse_int<int>(val, key);
        else if (key == "base")
            cfg.base_channels = parse_int<int>(val, key);
        else if (key == "in")
            cfg.in_channels = parse_int<int>(val, key);
        else if (key == "inception")
            cfg.inception = parse_bool(val, key);
        else if (key == "dense")
            cfg.dense = parse_bool(val, key);
        else if (key == "seed")
            cfg.seed = parse_int<std::uint64_t>(val, key);
        else
            throw ContractError("arch: unknown key " + std::string(key));
    }
    cfg.validate();
    return cfg;
}

std::string format_arch(const NetworkConfig& cfg)
{
    return "levels=" + std::to_string(cfg.levels) + ",base=" + std::to_string(cfg.base_channels) +
           ",inception=" + (cfg.inception ? "true" : "false") + ",dense=" + (cfg.dense ? "true" : "false") +
           ",in=" + std::to_string(cfg.in_channels) + ",seed=" + std::to_string(cfg.seed);
}

std::string config_to_json(const NetworkConfig& cfg)
{
    const nlohmann::json j = {{"in_channels", cfg.in_channels}, {"levels", cfg.levels},
                              {"base_channels", cfg.base_channels}, {"inception", cfg.inception},
                              {"dense", cfg.dense}, {"seed", cfg.seed}};
    return j.dump();
}

NetworkConfig config_from_json(std::string_view json)
{
    NetworkConfig cfg;
    try {
        const auto j = nlohmann::json::parse(json);
        cfg.in_channels = j.at("in_channels").get<int>();
        cfg.levels = j.at("levels").get<int>();
        cfg.base_channels = j.at("base_channels").get<int>();
        cfg.inception = j.at("inception").get<bool>();
        cfg.dense = j.at("dense").get<bool>();
        cfg.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(ParseErrorKind::BadFormat, std::string("network config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::size_t conv_param_count(int in, int out, int kernel)
{
    return std::size_t(kernel) * std::size_t(kernel) * std::size_t(in) * std::size_t(out) + std::size_t(out);
}

nn::ParamStore<float> param_layout(const NetworkConfig& cfg)
{
    cfg.validate();
    nn::ParamStore<float> p;
    int in = cfg.in_channels;
    for (int l = 0; l < cfg.levels; ++l) {
        add_block(p, cfg, "enc" + std::to_string(l), in, cfg.width_at(l));
        in = cfg.width_at(l);
    }
    for (int l = cfg.levels - 2; l >= 0; --l)
        add_block(p, cfg, "dec" + std::to_string(l), cfg.width_at(l) + cfg.width_at(l + 1), cfg.width_at(l));
    add_conv(p, "head", cfg.width_at(0), 1, 1);
    return p;
}

std::size_t count_params(const NetworkConfig& cfg)
{
    return param_layout(cfg).total_count();
}

WeightStore build(const NetworkConfig& cfg)
{
    WeightStore ws{cfg, param_layout(cfg)};
    std::mt19937_64 rng(cfg.seed);
    for (std::size_t s = 0; s < ws.params.slot_count(); ++s) {
        const auto& shape = ws.params.shape(s);
        if (shape.size() != 4)
            continue;  // biases stay zero
        const double fan_in = double(shape[1]) * shape[2] * shape[3];
        std::uniform_real_distribution<double> dist(-std::sqrt(6.0 / fan_in), std::sqrt(6.0 / fan_in));
        for (auto& v : ws.params.values(s))
            v = float(dist(rng));
    }
    return ws;
}

template <class T>
nn::Tensor<T> image_to_tensor(const Image& img, int multiple)
{
    if (multiple < 1)
        throw ContractError("padding multiple must be >= 1");
    const int H = img.height(), W = img.width(), C = img.channels();
    const int ph = (H + multiple - 1) / multiple * multiple;
    const int pw = (W + multiple - 1) / multiple * multiple;
    nn::Tensor<T> t(C, ph, pw);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < ph; ++y) {
            const int sy = reflect(y, H);
            for (int x = 0; x < pw; ++x)
                t.at(c, y, x) = T(img.at(sy, reflect(x, W), c));
        }
    return t;
}

template nn::Tensor<float> image_to_tensor<float>(const Image&, int);
template nn::Tensor<double> image_to_tensor<double>(const Image&, int);

ProbMap forward(const WeightStore& weights, const Image& img)
{
    if (img.channels() != weights.config.in_channels)
        throw ContractError("model expects " + std::to_string(weights.config.in_channels) +
                            " input channels, image has " + std::to_string(img.channels()));
    nn::Graph<float> g(weights.params);
    const auto in = g.input(image_to_tensor<float>(img, weights.config.size_multiple()));
    const auto& out = g.value(build_network(g, weights.config, in));
    std::vector<double> values(img.pixel_count());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            values[std::size_t(y) * std::size_t(img.width()) + std::size_t(x)] =
                std::clamp(double(out.at(0, y, x)), kProbFloor, 1.0 - kProbFloor);
    return ProbMap(img.height(), img.width(), std::move(values));
}

std::vector<std::uint8_t> serialize(const WeightStore& weights)
{
    skinseg::detail::ByteWriter w;
    w.raw("SKNW");
    w.uint(kWeightFormatVersion);
    const std::string cfg = config_to_json(weights.config);
    w.uint(std::uint32_t(cfg.size()));
    w.raw(cfg);
    w.uint(fnv1a(cfg));
    w.uint(std::uint32_t(weights.params.slot_count()));
    for (std::size_t s = 0; s < weights.params.slot_count(); ++s) {
        const auto& name = weights.params.name(s);
        w.uint(std::uint32_t(name.size()));
        w.raw(name);
        const auto vals = weights.params.values(s);
        w.uint(std::uint64_t(vals.size()));
        for (float v : vals)
            w.f32(v);
    }
    return w.take();
}

WeightStore deserialize(std::span<const std::uint8_t> bytes)
{
    skinseg::detail::ByteReader r(bytes);
    if (r.raw(4, "magic") != "SKNW")
        throw ParseError(ParseErrorKind::BadMagic, "not a SKNW weight file");
    const auto version = r.uint<std::uint32_t>("version");
    if (version != kWeightFormatVersion)
        throw ParseError(ParseErrorKind::BadFormat, "unsupported weight format version " + std::to_string(version));
    const auto cfg_len = r.uint<std::uint32_t>("config length");
    const std::string cfg_json = r.raw(cfg_len, "config");
    const auto hash = r.uint<std::uint64_t>("config hash");
    if (hash != fnv1a(cfg_json))
        throw ParseError(ParseErrorKind::BadFormat, "config hash mismatch");

    WeightStore ws{config_from_json(cfg_json), {}};
    ws.params = param_layout(ws.config);
    const auto slots = r.uint<std::uint32_t>("slot count");
    if (slots != ws.params.slot_count())
        throw ParseError(ParseErrorKind::BadFormat, "slot count does not match the stored config");
    for (std::size_t s = 0; s < slots; ++s) {
        const auto& expected = ws.params.name(s);
        const auto name_len = r.uint<std::uint32_t>("slot name length (slot " + expected + ")");
        const std::string name = r.raw(name_len, "slot name (slot " + expected + ")");
        if (name != expected)
            throw ParseError(ParseErrorKind::BadFormat, "slot " + name + " does not match config slot " + expected);
        const auto count = r.uint<std::uint64_t>("element count (slot " + name + ")");
        auto vals = ws.params.values(s);
        if (count != vals.size())
            throw ParseError(ParseErrorKind::BadFormat, "slot " + name + " has " + std::to_string(count) +
                                                            " values, config implies " + std::to_string(vals.size()));
        if (!r.has(count * 4))
            throw ParseError(ParseErrorKind::Truncated, "weight file truncated in slot " + name);
        const std::string what = "slot " + name;
        for (auto& v : vals)
            v = r.f32(what);
    }
    if (r.remaining() != 0)
        throw ParseError(ParseErrorKind::BadFormat, "trailing bytes after the last weight slot");
    return ws;
}

void save_weights(const WeightStore& weights, const std::filesystem::path& path)
{
    write_file_bytes(path, serialize(weights));
}

WeightStore load_weights(const std::filesystem::path& path)
{
    return deserialize(read_file_bytes(path));
}

}  // namespace skinseg::skinny
