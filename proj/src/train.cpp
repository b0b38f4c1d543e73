#include "skinseg/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "skinseg/error.hpp"
#include "skinseg/eval.hpp"

namespace skinseg::train {

namespace {

void check_parts(const ProbMap& pred, const BinaryMask& truth, const BinaryMask& mask)
{
    if (pred.height() != truth.height() || pred.width() != truth.width() || pred.height() != mask.height() ||
        pred.width() != mask.width())
        throw ContractError("loss inputs differ in dimensions");
}

LossValue single(const ProbMap& pred, const BinaryMask& truth, const BinaryMask& mask, LossWeights w)
{
    check_parts(pred, truth, mask);
    const LossPart<double> part{pred.values(), truth.bits(), mask.bits()};
    return evaluate_loss<double>(std::span(&part, 1), w);
}

// A training sample lifted to tensors at the padded network resolution. Padded
// pixels never enter the loss.
struct Prepared {
    nn::Tensor<float> input;
    std::vector<std::uint8_t> truth;
    std::vector<std::uint8_t> mask;
};

Prepared prepare(const TrainSample& s, int multiple)
{
    Prepared p{skinny::image_to_tensor<float>(s.input, multiple), {}, {}};
    const int ph = p.input.height(), pw = p.input.width();
    p.truth.assign(std::size_t(ph) * std::size_t(pw), 0);
    p.mask.assign(std::size_t(ph) * std::size_t(pw), 0);
    for (int y = 0; y < s.input.height(); ++y)
        for (int x = 0; x < s.input.width(); ++x) {
            p.truth[std::size_t(y) * std::size_t(pw) + std::size_t(x)] = s.truth.at(y, x) ? 1 : 0;
            p.mask[std::size_t(y) * std::size_t(pw) + std::size_t(x)] = s.loss_mask.at(y, x) ? 1 : 0;
        }
    return p;
}

void check_sample(const TrainSample& s, int channels)
{
    if (s.input.channels() != channels)
        throw ContractError("training sample has " + std::to_string(s.input.channels()) +
                            " channels, network expects " + std::to_string(channels));
    if (s.truth.height() != s.input.height() || s.truth.width() != s.input.width() ||
        s.loss_mask.height() != s.input.height() || s.loss_mask.width() != s.input.width())
        throw ContractError("training sample input, truth and loss mask differ in size");
}

}  // namespace

BceResult bce_loss(const ProbMap& pred, const BinaryMask& truth, const BinaryMask& mask)
{
    const LossValue v = single(pred, truth, mask, {1.0, 0.0});
    return {v.bce, v.empty};
}

double dice_coeff(const ProbMap& pred, const BinaryMask& truth, const BinaryMask& mask)
{
    return single(pred, truth, mask, {0.0, 1.0}).dice;
}

double coupled_loss(const ProbMap& pred, const BinaryMask& truth, const BinaryMask& mask, LossWeights weights)
{
    if (weights.bce < 0 || weights.dice < 0 || (weights.bce == 0 && weights.dice == 0))
        throw ContractError("loss weights must be non-negative and not both zero");
    return single(pred, truth, mask, weights).total;
}

TrainSample make_train_sample(Image input, BinaryMask truth)
{
    if (input.height() != truth.height() || input.width() != truth.width())
        throw ContractError("input and truth differ in size");
    BinaryMask all(input.height(), input.width(), true);
    return TrainSample{std::move(input), std::move(truth), std::move(all)};
}

Branch parse_branch(std::string_view s)
{
    if (s == "none")
        return Branch::None;
    if (s == "skin")
        return Branch::Skin;
    if (s == "nonskin")
        return Branch::NonSkin;
    throw ContractError("unknown branch '" + std::string(s) + "' (expected none|skin|nonskin)");
}

TrainSample stratify_sample(const SamplePair& sample, const BinaryMask& bc_mask, Branch branch)
{
    if (bc_mask.height() != sample.image.height() || bc_mask.width() != sample.image.width())
        throw ContractError("BC mask and image differ in size");
    TrainSample t = make_train_sample(sample.image, sample.truth);
    if (branch == Branch::Skin)
        t.loss_mask = bc_mask;
    else if (branch == Branch::NonSkin)
        t.loss_mask = bc_mask.complement();
    return t;
}

void TrainConfig::validate() const
{
    if (epochs < 1)
        throw ContractError("training needs at least one epoch");
    if (!(lr > 0.0))
        throw ContractError("learning rate must be positive");
    if (batch_size < 1)
        throw ContractError("batch size must be >= 1");
    if (loss_weights.bce < 0 || loss_weights.dice < 0 || (loss_weights.bce == 0 && loss_weights.dice == 0))
        throw ContractError("loss weights must be non-negative and not both zero");
    if (checkpoint_every < 0)
        throw ContractError("checkpoint interval must be non-negative");
    if (!(val_threshold >= 0.0 && val_threshold <= 1.0))
        throw ContractError("validation threshold must lie in [0,1]");
}

double validation_f_score(const skinny::WeightStore& weights, std::span<const TrainSample> samples, double threshold)
{
    eval::Confusion total;
    for (const auto& s : samples) {
        const ProbMap p = skinny::forward(weights, s.input);
        std::vector<std::uint8_t> bits(p.size());
        for (std::size_t i = 0; i < bits.size(); ++i)
            bits[i] = p[i] >= threshold ? 1 : 0;
        total += eval::confusion(BinaryMask(p.height(), p.width(), std::move(bits)), s.truth);
    }
    return eval::prf(total).f_score;
}

TrainResult train_model(const skinny::NetworkConfig& config, const TrainConfig& tcfg,
                        std::span<const TrainSample> samples, std::span<const TrainSample> val,
                        const std::function<void(const EpochReport&)>& on_epoch)
{
    config.validate();
    tcfg.validate();
    if (samples.empty())
        throw ContractError("training set is empty");
    for (const auto& s : samples)
        check_sample(s, config.in_channels);
    for (const auto& s : val)
        check_sample(s, config.in_channels);

    const auto start = std::chrono::steady_clock::now();
    const int multiple = config.size_multiple();
    std::vector<Prepared> prepared;
    prepared.reserve(samples.size());
    for (const auto& s : samples)
        prepared.push_back(prepare(s, multiple));

    skinny::WeightStore current = skinny::build(config);
    TrainResult result{current, {}};
    auto adam = nn::make_adam_state(current.params);
    const nn::AdamConfig adam_cfg{tcfg.lr, 0.9, 0.999, 1e-8};
    std::mt19937_64 shuffle_rng(tcfg.seed);
    std::vector<std::size_t> order(prepared.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::int64_t step = 0;
    double best_f = -1.0;

    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        int batches = 0;
        bool diverged = false;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += std::size_t(tcfg.batch_size)) {
            const std::size_t b1 = std::min(order.size(), b0 + std::size_t(tcfg.batch_size));
            nn::Graph<float> g(current.params);
            std::vector<nn::NodeId> preds;
            std::vector<SegmentationLossOp<float>::Target> targets;
            for (std::size_t k = b0; k < b1; ++k) {
                const Prepared& p = prepared[order[k]];
                preds.push_back(skinny::build_network(g, config, g.input(p.input)));
                targets.push_back({p.truth, p.mask});
            }
            auto op = std::make_shared<SegmentationLossOp<float>>(std::move(targets), tcfg.loss_weights);
            g.custom(preds, op);
            const double loss = op->last().total;
            if (!std::isfinite(loss)) {
                diverged = true;
                break;
            }
            const auto grads = g.backward();
            adam_step(current.params, grads, adam, adam_cfg, ++step);
            loss_sum += loss;
            ++batches;
        }
        if (diverged) {
            result.record.diverged = true;
            break;
        }

        const double epoch_loss = loss_sum / batches;
        const double f = val.empty() ? std::nan("") : validation_f_score(current, val, tcfg.val_threshold);
        result.record.train_loss.push_back(epoch_loss);
        result.record.val_f_score.push_back(f);
        if (val.empty() || f > best_f) {
            best_f = val.empty() ? best_f : f;
            result.record.best_epoch = epoch;
            result.weights = current;
        }
        if (tcfg.checkpoint_every > 0 && !tcfg.checkpoint_path.empty() && (epoch + 1) % tcfg.checkpoint_every == 0)
            skinny::save_weights(current, tcfg.checkpoint_path);
        if (on_epoch)
            on_epoch({epoch, epoch_loss, f});
    }

    result.record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

std::string record_to_json(const TrainRecord& record, bool include_timing)
{
    nlohmann::json j;
    j["train_loss"] = record.train_loss;
    auto vf = nlohmann::json::array();
    for (double f : record.val_f_score)
        vf.push_back(std::isfinite(f) ? nlohmann::json(f) : nlohmann::json(nullptr));
    j["val_f_score"] = vf;
    j["best_epoch"] = record.best_epoch;
    j["epochs_completed"] = record.epochs_completed();
    j["diverged"] = record.diverged;
    if (include_timing)
        j["wall_seconds"] = record.wall_seconds;
    return j.dump(2);
}

}  // namespace skinseg::train
