#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "skinseg/bayes.hpp"
#include "skinseg/dataset.hpp"
#include "skinseg/imgio.hpp"
#include "skinseg/skinny.hpp"
#include "skinseg/train.hpp"

namespace skinseg::ensemble {

enum class Scheme { Stack, Vote, BcSelect };
enum class SourceKind { RawGrayscale, Model };

struct ChannelSource {
    SourceKind kind = SourceKind::Model;
    /// Weight file; empty for RawGrayscale.
    std::filesystem::path model;
};

/// File-level description of an ensemble. Model and histogram references are paths.
struct EnsembleSpec {
    Scheme scheme = Scheme::Stack;
    std::vector<ChannelSource> sources;
    std::filesystem::path second_level;
    std::filesystem::path skin_model;
    std::filesystem::path nonskin_model;
    std::filesystem::path bc_hist;
    double threshold = 0.5;

    /// Structural invariants: STACK has >= 2 sources and a second-level model; VOTE an
    /// odd number (>= 3) of model sources; BC_SELECT all three references.
    void validate() const;
};

std::string scheme_name(Scheme s);
Scheme parse_scheme(std::string_view s);

/// JSON {scheme, sources:[{kind, model}], second_level, skin_model, nonskin_model,
/// bc_hist, threshold}. Relative paths resolve against `base_dir`.
EnsembleSpec spec_from_json(const std::string& json, const std::filesystem::path& base_dir = {});
std::string spec_to_json(const EnsembleSpec& spec);
EnsembleSpec load_spec(const std::filesystem::path& path);
void save_spec(const std::filesystem::path& path, const EnsembleSpec& spec);

/// A first-level channel with its model resident in memory.
struct Source {
    SourceKind kind = SourceKind::Model;
    std::shared_ptr<const skinny::WeightStore> model;

    static Source grayscale() { return {SourceKind::RawGrayscale, nullptr}; }
    static Source from_model(skinny::WeightStore w)
    {
        return {SourceKind::Model, std::make_shared<const skinny::WeightStore>(std::move(w))};
    }
};

/// Probability map of a base model on an RGB image. Single-channel models are fed
/// the grayscale conversion, 3-channel models the image itself.
ProbMap base_model_map(const skinny::WeightStore& model, const Image& rgb);

/// Channel i is the grayscale plane (RawGrayscale) or source i's probability map.
Image stack_channels(const Image& rgb, std::span<const Source> sources);

struct LoadedEnsemble {
    Scheme scheme = Scheme::Stack;
    std::vector<Source> sources;
    std::shared_ptr<const skinny::WeightStore> second_level;
    std::shared_ptr<const skinny::WeightStore> skin_model;
    std::shared_ptr<const skinny::WeightStore> nonskin_model;
    std::shared_ptr<const bayes::ColorHistogramPair> bc_hist;
    double threshold = 0.5;
};

/// Loads every referenced file and checks that a second-level model takes one input
/// channel per source.
LoadedEnsemble load(const EnsembleSpec& spec);

ProbMap infer_stack(const LoadedEnsemble& e, const Image& rgb);
ProbMap infer_vote(const LoadedEnsemble& e, const Image& rgb);
ProbMap infer_bc_select(const LoadedEnsemble& e, const Image& rgb);
ProbMap infer(const LoadedEnsemble& e, const Image& rgb);

/// Hard majority: 1.0 where more than half of the maps are >= threshold, else 0.0.
ProbMap vote_maps(std::span<const ProbMap> maps, double threshold = 0.5);
/// Per-pixel projection: skin_map where the BC mask is set, nonskin_map elsewhere.
ProbMap select_maps(const BinaryMask& bc_mask, const ProbMap& skin_map, const ProbMap& nonskin_map);

/// Trains a fresh combiner whose input is the stack of `sources` over each sample
/// (loss on every pixel). `arch.in_channels` is overridden with the source count.
train::TrainResult train_second_level(std::span<const Source> sources, std::span<const SamplePair> samples,
                                      std::span<const SamplePair> val, skinny::NetworkConfig arch,
                                      const train::TrainConfig& tcfg);

/// Model files making up the first level of an experiment.
struct ModelRoster {
    std::filesystem::path rgb;
    std::filesystem::path gs;
    std::filesystem::path pb_skin;
    std::filesystem::path pb_nonskin;
    std::filesystem::path bc_hist;
    /// Second-level model for a row lives at second_level_dir / (slug + ".sknw").
    std::filesystem::path second_level_dir;
};

struct NamedSpec {
    std::string name;
    std::string slug;
    EnsembleSpec spec;
};

/// The eight ensemble configurations compared in the experiments (stacked variants,
/// voting, and BC-gated selection).
std::vector<NamedSpec> standard_ensembles(const ModelRoster& roster);

}  // namespace skinseg::ensemble
