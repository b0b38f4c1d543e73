#pragma once

// Masked binary cross-entropy and soft Dice, pooled over every masked pixel of a
// batch, with analytic gradients with respect to the predicted probabilities.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "skinseg/error.hpp"
#include "skinseg/imgio.hpp"
#include "skinseg/nn.hpp"

namespace skinseg::train {

inline constexpr double kProbClamp = 1e-7;
inline constexpr double kDiceSmooth = 1.0;

struct LossWeights {
    double bce = 1.0;
    double dice = 1.0;
};

template <class T>
struct LossPart {
    std::span<const T> pred;
    std::span<const std::uint8_t> truth;
    std::span<const std::uint8_t> mask;
};

struct LossValue {
    double bce = 0.0;
    double dice = 1.0;
    double total = 0.0;
    std::size_t masked = 0;
    /// No pixel participated; bce is reported as 0.
    bool empty = true;
};

/// total = w_bce * BCE + w_dice * (1 - Dice). When `grads` is non-empty, adds
/// upstream * d(total)/d(pred) into grads[k] for each part; pixels outside the
/// mask receive exactly zero.
template <class T>
LossValue evaluate_loss(std::span<const LossPart<T>> parts, LossWeights w, std::span<const std::span<T>> grads = {},
                        double upstream = 1.0)
{
    LossValue out;
    double bce_sum = 0.0, inter = 0.0, denom = 0.0;
    for (const auto& part : parts) {
        if (part.pred.size() != part.truth.size() || part.pred.size() != part.mask.size())
            throw ContractError("loss inputs differ in size");
        for (std::size_t i = 0; i < part.pred.size(); ++i) {
            if (!part.mask[i])
                continue;
            const double p = double(part.pred[i]);
            const double g = part.truth[i] ? 1.0 : 0.0;
            const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
            bce_sum -= g * std::log(pc) + (1.0 - g) * std::log(1.0 - pc);
            inter += p * g;
            denom += p + g;
            ++out.masked;
        }
    }
    out.empty = out.masked == 0;
    out.bce = out.empty ? 0.0 : bce_sum / double(out.masked);
    out.dice = (2.0 * inter + kDiceSmooth) / (denom + kDiceSmooth);
    out.total = w.bce * out.bce + w.dice * (1.0 - out.dice);

    if (grads.empty() || out.empty)
        return out;
    if (grads.size() != parts.size())
        throw ContractError("loss gradient buffers do not match the parts");
    const double d_den = denom + kDiceSmooth;
    const double d_num = 2.0 * inter + kDiceSmooth;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& part = parts[k];
        auto gbuf = grads[k];
        for (std::size_t i = 0; i < part.pred.size(); ++i) {
            if (!part.mask[i])
                continue;
            const double p = double(part.pred[i]);
            const double g = part.truth[i] ? 1.0 : 0.0;
            // The clamp only protects the logarithm; the gradient is taken at the clamped point.
            const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
            const double d_bce = (pc - g) / (pc * (1.0 - pc)) / double(out.masked);
            const double d_dice = (2.0 * g * d_den - d_num) / (d_den * d_den);
            gbuf[i] += T(upstream * (w.bce * d_bce - w.dice * d_dice));
        }
    }
    return out;
}

/// Tape node computing the pooled coupled loss over several prediction nodes.
template <class T>
class SegmentationLossOp final : public nn::ScalarOp<T> {
public:
    struct Target {
        std::vector<std::uint8_t> truth;
        std::vector<std::uint8_t> mask;
    };

    SegmentationLossOp(std::vector<Target> targets, LossWeights weights)
        : targets_(std::move(targets)), weights_(weights)
    {
    }

    double forward(std::span<const nn::Tensor<T>* const> inputs) override
    {
        last_ = evaluate_loss<T>(parts(inputs), weights_);
        return last_.total;
    }

    void backward(std::span<const nn::Tensor<T>* const> inputs, double upstream,
                  std::span<nn::Tensor<T>* const> grads) override
    {
        std::vector<std::span<T>> bufs;
        for (auto* g : grads)
            bufs.push_back(g->data());
        evaluate_loss<T>(parts(inputs), weights_, std::span<const std::span<T>>(bufs), upstream);
    }

    const LossValue& last() const noexcept { return last_; }

private:
    std::vector<LossPart<T>> parts(std::span<const nn::Tensor<T>* const> inputs) const
    {
        if (inputs.size() != targets_.size())
            throw ContractError("loss node input count does not match its targets");
        std::vector<LossPart<T>> out;
        for (std::size_t k = 0; k < inputs.size(); ++k)
            out.push_back({inputs[k]->data(), targets_[k].truth, targets_[k].mask});
        return out;
    }

    std::vector<Target> targets_;
    LossWeights weights_;
    LossValue last_;
};

struct BceResult {
    double value = 0.0;
    bool empty_mask = false;
};

/// Mean masked BCE with predictions clamped to [1e-7, 1 - 1e-7].
BceResult bce_loss(const ProbMap& pred, const BinaryMask& truth, const BinaryMask& mask);
/// (2 sum(p g) + 1) / (sum(p) + sum(g) + 1) over masked pixels.
double dice_coeff(const ProbMap& pred, const BinaryMask& truth, const BinaryMask& mask);
double coupled_loss(const ProbMap& pred, const BinaryMask& truth, const BinaryMask& mask, LossWeights weights = {});

}  // namespace skinseg::train
