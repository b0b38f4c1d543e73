#include "skinseg/ensemble.hpp"

#include <fstream>

#include <json.hpp>

#include "skinseg/error.hpp"

namespace skinseg::ensemble {

namespace {

std::shared_ptr<const skinny::WeightStore> load_model(const std::filesystem::path& p)
{
    return std::make_shared<const skinny::WeightStore>(skinny::load_weights(p));
}

std::string path_string(const std::filesystem::path& p) { return p.generic_string(); }

std::filesystem::path resolve(const std::string& s, const std::filesystem::path& base)
{
    if (s.empty())
        return {};
    std::filesystem::path p(s);
    return p.is_relative() && !base.empty() ? base / p : p;
}

}  // namespace

std::string scheme_name(Scheme s)
{
    switch (s) {
    case Scheme::Stack:
        return "stack";
    case Scheme::Vote:
        return "vote";
    case Scheme::BcSelect:
        return "bc_select";
    }
    return "stack";
}

Scheme parse_scheme(std::string_view s)
{
    if (s == "stack")
        return Scheme::Stack;
    if (s == "vote")
        return Scheme::Vote;
    if (s == "bc_select")
        return Scheme::BcSelect;
    throw ContractError("unknown ensemble scheme '" + std::string(s) + "'");
}

void EnsembleSpec::validate() const
{
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw ContractError("ensemble threshold must lie in [0,1]");
    for (const auto& s : sources) {
        if (s.kind == SourceKind::Model && s.model.empty())
            throw ContractError("model source without a model reference");
        if (s.kind == SourceKind::RawGrayscale && !s.model.empty())
            throw ContractError("raw grayscale source must not reference a model");
    }
    switch (scheme) {
    case Scheme::Stack:
        if (sources.size() < 2)
            throw ContractError("stacking ensemble needs at least two sources");
        if (second_level.empty())
            throw ContractError("stacking ensemble needs a second-level model");
        break;
    case Scheme::Vote:
        if (sources.size() < 3 || sources.size() % 2 == 0)
            throw ContractError("voting ensemble needs an odd number (>= 3) of sources");
        for (const auto& s : sources)
            if (s.kind != SourceKind::Model)
                throw ContractError("voting ensemble sources must all be models");
        break;
    case Scheme::BcSelect:
        if (skin_model.empty() || nonskin_model.empty() || bc_hist.empty())
            throw ContractError("BC selection needs skin_model, nonskin_model and bc_hist");
        break;
    }
}

EnsembleSpec spec_from_json(const std::string& json, const std::filesystem::path& base_dir)
{
    EnsembleSpec spec;
    try {
        const auto j = nlohmann::json::parse(json);
        spec.scheme = parse_scheme(j.at("scheme").get<std::string>());
        if (j.contains("sources"))
            for (const auto& s : j.at("sources")) {
                ChannelSource cs;
                const auto kind = s.at("kind").get<std::string>();
                if (kind == "raw_grayscale")
                    cs.kind = SourceKind::RawGrayscale;
                else if (kind == "model")
                    cs.kind = SourceKind::Model;
                else
                    throw ContractError("unknown source kind '" + kind + "'");
                if (s.contains("model") && !s.at("model").is_null())
                    cs.model = resolve(s.at("model").get<std::string>(), base_dir);
                spec.sources.push_back(std::move(cs));
            }
        auto opt_path = [&](const char* key) {
            return j.contains(key) && !j.at(key).is_null() ? resolve(j.at(key).get<std::string>(), base_dir)
                                                           : std::filesystem::path{};
        };
        spec.second_level = opt_path("second_level");
        spec.skin_model = opt_path("skin_model");
        spec.nonskin_model = opt_path("nonskin_model");
        spec.bc_hist = opt_path("bc_hist");
        if (j.contains("threshold"))
            spec.threshold = j.at("threshold").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(ParseErrorKind::BadFormat, std::string("ensemble spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

std::string spec_to_json(const EnsembleSpec& spec)
{
    nlohmann::json j;
    j["scheme"] = scheme_name(spec.scheme);
    auto sources = nlohmann::json::array();
    for (const auto& s : spec.sources) {
        if (s.kind == SourceKind::RawGrayscale)
            sources.push_back({{"kind", "raw_grayscale"}, {"model", nullptr}});
        else
            sources.push_back({{"kind", "model"}, {"model", path_string(s.model)}});
    }
    j["sources"] = sources;
    auto opt = [](const std::filesystem::path& p) { return p.empty() ? nlohmann::json(nullptr) : nlohmann::json(path_string(p)); };
    j["second_level"] = opt(spec.second_level);
    j["skin_model"] = opt(spec.skin_model);
    j["nonskin_model"] = opt(spec.nonskin_model);
    j["bc_hist"] = opt(spec.bc_hist);
    j["threshold"] = spec.threshold;
    return j.dump(2);
}

EnsembleSpec load_spec(const std::filesystem::path& path)
{
    const auto bytes = read_file_bytes(path);
    return spec_from_json(std::string(bytes.begin(), bytes.end()), path.parent_path());
}

void save_spec(const std::filesystem::path& path, const EnsembleSpec& spec)
{
    const std::string s = spec_to_json(spec) + "\n";
    write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

ProbMap base_model_map(const skinny::WeightStore& model, const Image& rgb)
{
    if (rgb.channels() != 3)
        throw ContractError("ensemble input must be a 3-channel image");
    switch (model.config.in_channels) {
    case 3:
        return skinny::forward(model, rgb);
    case 1:
        return skinny::forward(model, to_grayscale(rgb));
    default:
        throw ContractError("base model expects " + std::to_string(model.config.in_channels) +
                            " channels; only RGB (3) or grayscale (1) base models can consume an image");
    }
}

Image stack_channels(const Image& rgb, std::span<const Source> sources)
{
    if (rgb.channels() != 3)
        throw ContractError("ensemble input must be a 3-channel image");
    if (sources.empty())
        throw ContractError("cannot stack zero sources");
    const int n = int(sources.size());
    std::vector<double> out(rgb.pixel_count() * std::size_t(n));
    for (int c = 0; c < n; ++c) {
        const auto& src = sources[std::size_t(c)];
        std::vector<double> plane;
        if (src.kind == SourceKind::RawGrayscale) {
            const Image g = to_grayscale(rgb);
            plane.assign(g.data().begin(), g.data().end());
        } else {
            if (!src.model)
                throw ContractError("model source has no loaded model");
            const ProbMap m = base_model_map(*src.model, rgb);
            plane.assign(m.values().begin(), m.values().end());
        }
        for (std::size_t i = 0; i < plane.size(); ++i)
            out[i * std::size_t(n) + std::size_t(c)] = plane[i];
    }
    return Image(rgb.height(), rgb.width(), n, std::move(out));
}

LoadedEnsemble load(const EnsembleSpec& spec)
{
    spec.validate();
    LoadedEnsemble e;
    e.scheme = spec.scheme;
    e.threshold = spec.threshold;
    if (spec.scheme != Scheme::BcSelect)
        for (const auto& s : spec.sources)
            e.sources.push_back(s.kind == SourceKind::RawGrayscale ? Source::grayscale()
                                                                   : Source{SourceKind::Model, load_model(s.model)});
    if (spec.scheme == Scheme::Stack) {
        e.second_level = load_model(spec.second_level);
        if (e.second_level->config.in_channels != int(e.sources.size()))
            throw ContractError("second-level model takes " + std::to_string(e.second_level->config.in_channels) +
                                " channels but the ensemble has " + std::to_string(e.sources.size()) + " sources");
    }
    if (spec.scheme == Scheme::BcSelect) {
        e.skin_model = load_model(spec.skin_model);
        e.nonskin_model = load_model(spec.nonskin_model);
        e.bc_hist = std::make_shared<const bayes::ColorHistogramPair>(bayes::load_histograms(spec.bc_hist));
    }
    return e;
}

ProbMap infer_stack(const LoadedEnsemble& e, const Image& rgb)
{
    if (!e.second_level)
        throw ContractError("stacking ensemble has no second-level model");
    if (e.second_level->config.in_channels != int(e.sources.size()))
        throw ContractError("second-level model input channels differ from the source count");
    return skinny::forward(*e.second_level, stack_channels(rgb, e.sources));
}

ProbMap vote_maps(std::span<const ProbMap> maps, double threshold)
{
    if (maps.size() < 3 || maps.size() % 2 == 0)
        throw ContractError("majority vote needs an odd number (>= 3) of maps");
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw ContractError("vote threshold must lie in [0,1]");
    for (const auto& m : maps)
        if (m.height() != maps[0].height() || m.width() != maps[0].width())
            throw ContractError("vote maps differ in size");
    ProbMap out(maps[0].height(), maps[0].width());
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::size_t votes = 0;
        for (const auto& m : maps)
            votes += m[i] >= threshold ? 1 : 0;
        out[i] = 2 * votes > maps.size() ? 1.0 : 0.0;
    }
    return out;
}

ProbMap infer_vote(const LoadedEnsemble& e, const Image& rgb)
{
    std::vector<ProbMap> maps;
    for (const auto& s : e.sources) {
        if (s.kind != SourceKind::Model || !s.model)
            throw ContractError("voting ensemble sources must all be loaded models");
        maps.push_back(base_model_map(*s.model, rgb));
    }
    return vote_maps(maps, e.threshold);
}

ProbMap select_maps(const BinaryMask& bc_mask, const ProbMap& skin_map, const ProbMap& nonskin_map)
{
    if (bc_mask.height() != skin_map.height() || bc_mask.width() != skin_map.width() ||
        nonskin_map.height() != skin_map.height() || nonskin_map.width() != skin_map.width())
        throw ContractError("BC selection inputs differ in size");
    ProbMap out(skin_map.height(), skin_map.width());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = bc_mask[i] ? skin_map[i] : nonskin_map[i];
    return out;
}

ProbMap infer_bc_select(const LoadedEnsemble& e, const Image& rgb)
{
    if (!e.skin_model || !e.nonskin_model || !e.bc_hist)
        throw ContractError("BC selection ensemble is missing a model or the histogram");
    const BinaryMask bc = bayes::binarize(bayes::bc_prob_map(*e.bc_hist, rgb), e.threshold);
    return select_maps(bc, base_model_map(*e.skin_model, rgb), base_model_map(*e.nonskin_model, rgb));
}

ProbMap infer(const LoadedEnsemble& e, const Image& rgb)
{
    switch (e.scheme) {
    case Scheme::Stack:
        return infer_stack(e, rgb);
    case Scheme::Vote:
        return infer_vote(e, rgb);
    case Scheme::BcSelect:
        return infer_bc_select(e, rgb);
    }
    throw ContractError("unknown ensemble scheme");
}

train::TrainResult train_second_level(std::span<const Source> sources, std::span<const SamplePair> samples,
                                      std::span<const SamplePair> val, skinny::NetworkConfig arch,
                                      const train::TrainConfig& tcfg)
{
    if (sources.size() < 2)
        throw ContractError("a second-level model needs at least two sources");
    arch.in_channels = int(sources.size());
    auto lift = [&](std::span<const SamplePair> in) {
        std::vector<train::TrainSample> out;
        out.reserve(in.size());
        for (const auto& s : in)
            out.push_back(train::make_train_sample(stack_channels(s.image, sources), s.truth));
        return out;
    };
    const auto train_set = lift(samples);
    const auto val_set = lift(val);
    return train::train_model(arch, tcfg, train_set, val_set);
}

std::vector<NamedSpec> standard_ensembles(const ModelRoster& r)
{
    const ChannelSource gs{SourceKind::Model, r.gs};
    const ChannelSource rgb{SourceKind::Model, r.rgb};
    const ChannelSource pbs{SourceKind::Model, r.pb_skin};
    const ChannelSource pbns{SourceKind::Model, r.pb_nonskin};
    const ChannelSource raw{SourceKind::RawGrayscale, {}};

    auto stack = [&](std::string name, std::string slug, std::vector<ChannelSource> sources) {
        EnsembleSpec s;
        s.scheme = Scheme::Stack;
        s.sources = std::move(sources);
        s.second_level = r.second_level_dir / (slug + ".sknw");
        return NamedSpec{std::move(name), std::move(slug), std::move(s)};
    };

    std::vector<NamedSpec> rows;
    rows.push_back(stack("Ensemble-S", "ensemble_s", {gs, pbs, pbns}));
    {
        EnsembleSpec v;
        v.scheme = Scheme::Vote;
        v.sources = {gs, pbs, pbns};
        rows.push_back({"Ensemble-V", "ensemble_v", v});
    }
    rows.push_back(stack("Ensemble-S^RGB", "ensemble_s_rgb", {rgb, pbs, pbns}));
    rows.push_back(stack("Ensemble-S^-S", "ensemble_s_minus_s", {gs, pbns}));
    rows.push_back(stack("Ensemble-S_A", "ensemble_s_a", {raw, pbs, pbns}));
    rows.push_back(stack("Ensemble-S_B", "ensemble_s_b", {raw, rgb, gs}));
    rows.push_back(stack("Ensemble-S_B^-GS", "ensemble_s_b_minus_gs", {rgb, gs}));
    {
        EnsembleSpec b;
        b.scheme = Scheme::BcSelect;
        b.skin_model = r.pb_skin;
        b.nonskin_model = r.pb_nonskin;
        b.bc_hist = r.bc_hist;
        rows.push_back({"Ensemble-BC+S", "ensemble_bc_s", b});
    }
    return rows;
}

}  // namespace skinseg::ensemble
