#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "skinseg/imgio.hpp"
#include "skinseg/nn.hpp"

namespace skinseg::skinny {

/// Encoder-decoder ("Skinny-lite") description. Level l has base_channels * 2^l
/// feature maps; levels=6, base=16 is the full-scale setting, levels=3 the desk one.
struct NetworkConfig {
    int in_channels = 3;
    int levels = 3;
    int base_channels = 16;
    bool inception = false;
    bool dense = false;
    std::uint64_t seed = 0;

    void validate() const;
    int width_at(int level) const { return base_channels << level; }
    /// Spatial sizes must be multiples of this before entering the network.
    int size_multiple() const { return 1 << (levels - 1); }

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Parses "levels=3,base=16,inception=true,dense=false" (any subset, any order)
/// on top of `defaults`. Also accepts in=<channels> and seed=<n>.
NetworkConfig parse_arch(std::string_view arch, NetworkConfig defaults = {});
/// Inverse of parse_arch: every field, so parse_arch(format_arch(c)) == c.
std::string format_arch(const NetworkConfig& cfg);

std::string config_to_json(const NetworkConfig& cfg);
NetworkConfig config_from_json(std::string_view json);

struct WeightStore {
    NetworkConfig config;
    nn::ParamStore<float> params;

    friend bool operator==(const WeightStore&, const WeightStore&) = default;
};

std::size_t conv_param_count(int in, int out, int kernel);

/// Zero-valued parameter store with the slot layout implied by `cfg`.
nn::ParamStore<float> param_layout(const NetworkConfig& cfg);
std::size_t count_params(const NetworkConfig& cfg);

/// He-uniform weights, zero biases, deterministic in cfg.seed.
WeightStore build(const NetworkConfig& cfg);

namespace detail {

template <class T>
nn::NodeId conv(nn::Graph<T>& g, const std::string& name, nn::NodeId x)
{
    const auto& p = g.params();
    return g.conv2d(x, p.index(name + ".w"), p.index(name + ".b"));
}

template <class T>
nn::NodeId block(nn::Graph<T>& g, const NetworkConfig& cfg, const std::string& prefix, nn::NodeId x)
{
    if (cfg.inception) {
        const nn::NodeId branches[3] = {g.relu(conv(g, prefix + ".b1", x)), g.relu(conv(g, prefix + ".b3", x)),
                                        g.relu(conv(g, prefix + ".b5", x))};
        nn::NodeId merged = g.concat(std::span<const nn::NodeId>(branches));
        if (cfg.dense)
            merged = g.concat(x, merged);
        return g.relu(conv(g, prefix + ".fuse", merged));
    }
    const nn::NodeId h1 = g.relu(conv(g, prefix + ".conv1", x));
    const nn::NodeId h2 = g.relu(conv(g, prefix + ".conv2", h1));
    if (!cfg.dense)
        return h2;
    return g.relu(conv(g, prefix + ".fuse", g.concat(x, h2)));
}

}  // namespace detail

/// Appends the network to `g` starting from `input` (C x H x W with H, W multiples
/// of cfg.size_multiple()) and returns the sigmoid output node (1 x H x W).
template <class T>
nn::NodeId build_network(nn::Graph<T>& g, const NetworkConfig& cfg, nn::NodeId input)
{
    if (g.value(input).channels() != cfg.in_channels)
        throw ContractError("network expects " + std::to_string(cfg.in_channels) + " input channels, got " +
                            std::to_string(g.value(input).channels()));
    std::vector<nn::NodeId> skips;
    nn::NodeId x = input;
    for (int l = 0; l < cfg.levels; ++l) {
        if (l > 0)
            x = g.maxpool2(x);
        x = detail::block(g, cfg, "enc" + std::to_string(l), x);
        skips.push_back(x);
    }
    for (int l = cfg.levels - 2; l >= 0; --l) {
        const nn::NodeId up = g.upsample2(x);
        x = detail::block(g, cfg, "dec" + std::to_string(l), g.concat(skips[std::size_t(l)], up));
    }
    return g.sigmoid(detail::conv(g, "head", x));
}

/// CHW tensor of `img`, reflect-padded at the bottom/right to multiples of `multiple`.
template <class T>
nn::Tensor<T> image_to_tensor(const Image& img, int multiple = 1);

/// Reflect-padded to a multiple of the dimension factor, then cropped back.
ProbMap forward(const WeightStore& weights, const Image& img);

std::vector<std::uint8_t> serialize(const WeightStore& weights);
WeightStore deserialize(std::span<const std::uint8_t> bytes);
void save_weights(const WeightStore& weights, const std::filesystem::path& path);
WeightStore load_weights(const std::filesystem::path& path);

}  // namespace skinseg::skinny
