#include "skinseg/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "skinseg/bayes.hpp"
#include "skinseg/dataset.hpp"
#include "skinseg/ensemble.hpp"
#include "skinseg/error.hpp"
#include "skinseg/eval.hpp"
#include "skinseg/imgio.hpp"

namespace skinseg::cli {

namespace fs = std::filesystem;

std::uint64_t derive_seed(std::uint64_t seed, std::string_view name)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    std::uint64_t z = seed ^ h;
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

namespace {

void write_text(const fs::path& path, const std::string& text)
{
    write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const fs::path& path)
{
    const auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

struct SplitSamples {
    std::vector<SamplePair> train;
    std::vector<SamplePair> validation;
    std::vector<SamplePair> test;
};

// Without a split file every sample is a training sample.
SplitSamples load_split_samples(const fs::path& manifest, const fs::path& split_path)
{
    auto all = load_samples(manifest);
    if (split_path.empty())
        return {std::move(all), {}, {}};
    const DatasetSplit split = read_split(split_path);
    return {select_samples(all, split.train), select_samples(all, split.validation), select_samples(all, split.test)};
}

enum class Channels { Rgb, Gray };

Channels parse_channels(std::string_view s)
{
    if (s == "rgb")
        return Channels::Rgb;
    if (s == "gs")
        return Channels::Gray;
    throw ContractError("unknown channel mode '" + std::string(s) + "' (expected rgb|gs|stack)");
}

BinaryMask bc_mask(const bayes::ColorHistogramPair& hist, const Image& rgb)
{
    return bayes::binarize(bayes::bc_prob_map(hist, rgb));
}

std::vector<train::TrainSample> lift_samples(std::span<const SamplePair> in, Channels ch, train::Branch branch,
                                             const bayes::ColorHistogramPair* hist)
{
    if (branch != train::Branch::None && !hist)
        throw ContractError("stratified training needs a BC histogram (--bc)");
    std::vector<train::TrainSample> out;
    out.reserve(in.size());
    for (const auto& s : in) {
        SamplePair p{ch == Channels::Gray ? to_grayscale(s.image) : s.image, s.truth, s.id};
        if (branch == train::Branch::None)
            out.push_back(train::make_train_sample(std::move(p.image), std::move(p.truth)));
        else
            out.push_back(train::stratify_sample(p, bc_mask(*hist, s.image), branch));
    }
    return out;
}

train::TrainResult train_base(std::span<const SamplePair> train_set, std::span<const SamplePair> val_set, Channels ch,
                              train::Branch branch, const bayes::ColorHistogramPair* hist, skinny::NetworkConfig arch,
                              const train::TrainConfig& tcfg)
{
    arch.in_channels = ch == Channels::Gray ? 1 : 3;
    const auto t = lift_samples(train_set, ch, branch, hist);
    const auto v = lift_samples(val_set, ch, train::Branch::None, nullptr);
    return train::train_model(arch, tcfg, t, v);
}

std::vector<ensemble::Source> load_sources(const ensemble::EnsembleSpec& spec)
{
    std::vector<ensemble::Source> out;
    for (const auto& s : spec.sources)
        out.push_back(s.kind == ensemble::SourceKind::RawGrayscale
                          ? ensemble::Source::grayscale()
                          : ensemble::Source::from_model(skinny::load_weights(s.model)));
    return out;
}

nlohmann::json curve_json(const std::vector<eval::PrPoint>& curve)
{
    auto j = nlohmann::json::array();
    for (const auto& p : curve)
        j.push_back({p.threshold, p.precision, p.recall});
    return j;
}

nlohmann::json wilcoxon_json(const eval::WilcoxonResult& w)
{
    return {{"statistic", w.statistic}, {"w_plus", w.w_plus},         {"w_minus", w.w_minus},
            {"p_two_tailed", w.p_two_tailed}, {"n_used", w.n_used}, {"exact", w.exact}};
}

struct DirPairs {
    std::vector<ProbMap> preds;
    std::vector<BinaryMask> truths;
    std::vector<std::string> ids;
};

// Truth masks are every .pgm in truth_dir (sorted by name); each needs a prediction
// with the same file name in pred_dir.
DirPairs load_dir_pairs(const fs::path& pred_dir, const fs::path& truth_dir)
{
    if (!fs::is_directory(truth_dir))
        throw IoError("truth directory not found: " + truth_dir.string());
    if (!fs::is_directory(pred_dir))
        throw IoError("prediction directory not found: " + pred_dir.string());
    std::vector<fs::path> truth_files;
    for (const auto& e : fs::directory_iterator(truth_dir))
        if (e.is_regular_file() && e.path().extension() == ".pgm")
            truth_files.push_back(e.path());
    std::sort(truth_files.begin(), truth_files.end());
    if (truth_files.empty())
        throw IoError("no .pgm truth masks in " + truth_dir.string());
    DirPairs out;
    for (const auto& t : truth_files) {
        const fs::path p = pred_dir / t.filename();
        if (!fs::exists(p))
            throw IoError("missing prediction for " + t.filename().string() + " in " + pred_dir.string());
        out.preds.push_back(read_prob_map(p));
        out.truths.push_back(read_mask(t));
        out.ids.push_back(t.stem().string());
    }
    return out;
}

const char* error_class(const Error& e)
{
    if (dynamic_cast<const ParseError*>(&e))
        return "parse error";
    if (dynamic_cast<const IoError*>(&e))
        return "i/o error";
    if (dynamic_cast<const ContractError*>(&e))
        return "contract violation";
    return "error";
}

// Options shared by the training subcommands.
struct TrainFlags {
    std::string arch = "levels=3,base=16,inception=false,dense=false";
    int epochs = 200;
    double lr = 1e-3;
    int batch = 4;
    double bce_weight = 1.0;
    double dice_weight = 1.0;
    std::uint64_t seed = 17;
    int checkpoint_every = 0;
    std::string checkpoint;

    void attach(CLI::App* sub)
    {
        sub->add_option("--arch", arch, "Network shape, e.g. levels=3,base=16,inception=false,dense=false")
            ->capture_default_str();
        sub->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
        sub->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
        sub->add_option("--batch", batch, "Mini-batch size")->capture_default_str();
        sub->add_option("--bce-weight", bce_weight, "Weight of the BCE term")->capture_default_str();
        sub->add_option("--dice-weight", dice_weight, "Weight of the (1 - Dice) term")->capture_default_str();
        sub->add_option("--seed", seed, "Global seed (init and shuffle streams derive from it)")
            ->capture_default_str();
        sub->add_option("--checkpoint-every", checkpoint_every, "Save weights every N epochs (0 = never)")
            ->capture_default_str();
        sub->add_option("--checkpoint", checkpoint, "Checkpoint path");
    }

    skinny::NetworkConfig network() const
    {
        skinny::NetworkConfig defaults;
        defaults.seed = derive_seed(seed, "init");
        return skinny::parse_arch(arch, defaults);
    }

    train::TrainConfig training() const
    {
        train::TrainConfig t;
        t.epochs = epochs;
        t.lr = lr;
        t.batch_size = batch;
        t.loss_weights = {bce_weight, dice_weight};
        t.seed = derive_seed(seed, "shuffle");
        t.checkpoint_every = checkpoint_every;
        t.checkpoint_path = checkpoint;
        return t;
    }
};

void finish_training(const train::TrainResult& r, const std::string& out_path, const std::string& log_path,
                     std::ostream& out)
{
    skinny::save_weights(r.weights, out_path);
    if (!log_path.empty())
        write_text(log_path, train::record_to_json(r.record) + "\n");
    char line[160];
    std::snprintf(line, sizeof line, "trained %zu epochs, best epoch %d%s\n", r.record.epochs_completed(),
                  r.record.best_epoch, r.record.diverged ? " (diverged)" : "");
    out << line;
}

}  // namespace

void reproduce_desk(const DeskConfig& cfg, const fs::path& out_dir, std::ostream& log)
{
    if (cfg.samples < 10)
        throw ContractError("the desk experiment needs at least 10 samples");
    cfg.arch.validate();

    log << "generating " << cfg.samples << " synthetic samples\n";
    const auto samples = generate_synthetic_dataset(cfg.samples, cfg.size, derive_seed(cfg.seed, "data"));
    save_dataset(out_dir / "data", samples);
    const DatasetSplit split = split_dataset(samples, {0.6, 0.2, 0.2}, derive_seed(cfg.seed, "split"));
    write_split(out_dir / "data" / "split.json", split);
    const auto train_s = select_samples(samples, split.train);
    const auto val_s = select_samples(samples, split.validation);
    const auto test_s = select_samples(samples, split.test);

    log << "fitting BC histograms\n";
    const auto hist = bayes::fit_histograms(train_s, cfg.bins);
    const fs::path models = out_dir / "models";
    bayes::save_histograms(models / "bc.bch", hist);

    struct Base {
        const char* name;
        const char* slug;
        Channels channels;
        train::Branch branch;
    };
    const Base bases[] = {{"Skinny-RGB", "rgb", Channels::Rgb, train::Branch::None},
                          {"Skinny-GS", "gs", Channels::Gray, train::Branch::None},
                          {"Skinny-P_B^S", "pb_skin", Channels::Rgb, train::Branch::Skin},
                          {"Skinny-P_B^NS", "pb_nonskin", Channels::Rgb, train::Branch::NonSkin}};

    auto tcfg_for = [&](const std::string& slug, int epochs) {
        train::TrainConfig t;
        t.epochs = epochs;
        t.lr = cfg.lr;
        t.batch_size = cfg.batch_size;
        t.seed = derive_seed(cfg.seed, "shuffle/" + slug);
        return t;
    };
    auto arch_for = [&](const std::string& slug) {
        skinny::NetworkConfig a = cfg.arch;
        a.seed = derive_seed(cfg.seed, "init/" + slug);
        return a;
    };

    for (const auto& b : bases) {
        log << "training " << b.name << "\n";
        const auto r = train_base(train_s, val_s, b.channels, b.branch, &hist, arch_for(b.slug),
                                  tcfg_for(b.slug, cfg.epochs));
        skinny::save_weights(r.weights, models / (std::string(b.slug) + ".sknw"));
        write_text(out_dir / "records" / (std::string(b.slug) + ".json"), train::record_to_json(r.record, false) + "\n");
    }

    // Specs reference models relative to their own directory so the artifacts do
    // not depend on where out_dir lives.
    const ensemble::ModelRoster roster{"../models/rgb.sknw",     "../models/gs.sknw", "../models/pb_skin.sknw",
                                       "../models/pb_nonskin.sknw", "../models/bc.bch", "../models"};
    std::vector<ensemble::NamedSpec> chosen;
    for (auto& row : ensemble::standard_ensembles(roster))
        if (row.slug == "ensemble_s" || row.slug == "ensemble_v" || row.slug == "ensemble_bc_s")
            chosen.push_back(std::move(row));
    const fs::path spec_dir = out_dir / "ensembles";
    for (const auto& row : chosen) {
        ensemble::save_spec(spec_dir / (row.slug + ".json"), row.spec);
        if (row.spec.scheme != ensemble::Scheme::Stack)
            continue;
        log << "training " << row.name << " second level\n";
        const auto spec = ensemble::load_spec(spec_dir / (row.slug + ".json"));
        const auto sources = load_sources(spec);
        const auto r = ensemble::train_second_level(sources, train_s, val_s, arch_for(row.slug),
                                                    tcfg_for(row.slug, cfg.ensemble_epochs));
        skinny::save_weights(r.weights, spec.second_level);
        write_text(out_dir / "records" / (row.slug + ".json"), train::record_to_json(r.record, false) + "\n");
    }

    log << "evaluating on " << test_s.size() << " test images\n";
    std::vector<BinaryMask> truths;
    std::vector<std::string> ids;
    for (const auto& s : test_s) {
        truths.push_back(s.truth);
        ids.push_back(s.id);
    }
    std::vector<std::pair<std::string, eval::EvalReport>> rows;
    auto add_row = [&](const std::string& name, const std::string& slug, const std::vector<ProbMap>& preds) {
        auto report = eval::evaluate(preds, truths, ids, 0.5, cfg.pr_steps);
        eval::save_report(out_dir / "reports" / (slug + ".json"), report);
        rows.emplace_back(name, std::move(report));
    };

    {
        std::vector<ProbMap> preds;
        for (const auto& s : test_s)
            preds.push_back(bayes::bc_prob_map(hist, s.image));
        add_row("BC", "bc", preds);
    }
    for (const auto& b : bases) {
        const auto model = skinny::load_weights(models / (std::string(b.slug) + ".sknw"));
        std::vector<ProbMap> preds;
        for (const auto& s : test_s)
            preds.push_back(ensemble::base_model_map(model, s.image));
        add_row(b.name, b.slug, preds);
    }
    for (const auto& row : chosen) {
        const auto loaded = ensemble::load(ensemble::load_spec(spec_dir / (row.slug + ".json")));
        std::vector<ProbMap> preds;
        for (const auto& s : test_s)
            preds.push_back(ensemble::infer(loaded, s.image));
        add_row(row.name, row.slug, preds);
    }

    write_text(out_dir / "results.csv", eval::table_csv(rows));

    auto curves = nlohmann::json::array();
    for (const auto& [name, report] : rows)
        curves.push_back({{"method", name}, {"curve", curve_json(report.pr_curve)}});
    write_text(out_dir / "pr_curves.json", curves.dump(2) + "\n");

    // Significance of the stacked ensemble against every other row.
    const auto& reference = *std::find_if(rows.begin(), rows.end(), [](const auto& r) { return r.first == "Ensemble-S"; });
    auto tests = nlohmann::json::array();
    for (const auto& [name, report] : rows) {
        if (name == reference.first)
            continue;
        const auto [a, b] = eval::paired_scores(reference.second, report);
        auto j = wilcoxon_json(eval::wilcoxon_signed_rank(a, b));
        j["a"] = reference.first;
        j["b"] = name;
        tests.push_back(std::move(j));
    }
    write_text(out_dir / "wilcoxon.json", tests.dump(2) + "\n");
    log << eval::table_csv(rows);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Skin segmentation with Bayesian colour priors, Skinny-style U-Nets and ensembles", "skinseg"};
    app.require_subcommand(1);
    app.set_config("--config", "", "INI/TOML file supplying option values (sections name subcommands)");
    app.set_help_all_flag("--help-all", "Expand help for all subcommands");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset (images, masks, manifest.json)");
    int gen_n = 64, gen_size = 64;
    std::uint64_t gen_seed = 17;
    std::string gen_out;
    gen->add_option("--n", gen_n, "Number of samples")->capture_default_str();
    gen->add_option("--size", gen_size, "Side length in pixels")->capture_default_str();
    gen->add_option("--seed", gen_seed, "Seed")->capture_default_str();
    gen->add_option("--out", gen_out, "Output directory")->required();

    // split
    auto* spl = app.add_subcommand("split", "Seeded train/validation/test partition of a manifest");
    std::string spl_manifest, spl_out;
    double spl_val = 0.2, spl_test = 0.2;
    std::uint64_t spl_seed = 17;
    spl->add_option("--manifest", spl_manifest, "Dataset manifest")->required();
    spl->add_option("--val", spl_val, "Validation fraction")->capture_default_str();
    spl->add_option("--test", spl_test, "Test fraction")->capture_default_str();
    spl->add_option("--seed", spl_seed, "Seed")->capture_default_str();
    spl->add_option("--out", spl_out, "Split JSON")->required();

    // train-bc
    auto* tbc = app.add_subcommand("train-bc", "Fit skin/non-skin colour histograms");
    std::string tbc_manifest, tbc_split, tbc_out;
    int tbc_bins = 32;
    tbc->add_option("--manifest", tbc_manifest, "Dataset manifest")->required();
    tbc->add_option("--split", tbc_split, "Split JSON (fit on its training ids)");
    tbc->add_option("--bins", tbc_bins, "Bins per colour channel")->capture_default_str();
    tbc->add_option("--out", tbc_out, "Histogram file")->required();

    // bc-infer
    auto* bci = app.add_subcommand("bc-infer", "Per-pixel skin posterior of an image");
    std::string bci_hist, bci_in, bci_out;
    double bci_alpha = 0.0;
    bci->add_option("--hist", bci_hist, "Histogram file")->required();
    bci->add_option("--in", bci_in, "Input PPM")->required();
    bci->add_option("--out", bci_out, "Output probability PGM")->required();
    bci->add_option("--alpha", bci_alpha, "Additive smoothing per cell")->capture_default_str();

    // train-skinny
    auto* tsk = app.add_subcommand("train-skinny", "Train a base segmentation network");
    std::string tsk_manifest, tsk_split, tsk_channels = "rgb", tsk_branch = "none", tsk_bc, tsk_spec, tsk_out, tsk_log;
    TrainFlags tsk_flags;
    tsk->add_option("--manifest", tsk_manifest, "Dataset manifest")->required();
    tsk->add_option("--split", tsk_split, "Split JSON");
    tsk->add_option("--channels", tsk_channels, "Input modality")
        ->check(CLI::IsMember({"rgb", "gs", "stack"}))
        ->capture_default_str();
    tsk->add_option("--branch", tsk_branch, "Loss stratification by the BC mask")
        ->check(CLI::IsMember({"none", "skin", "nonskin"}))
        ->capture_default_str();
    tsk->add_option("--bc", tsk_bc, "Histogram file (needed for --branch skin|nonskin)");
    tsk->add_option("--spec", tsk_spec, "Ensemble spec supplying the stacked input (--channels stack)");
    tsk->add_option("--out", tsk_out, "Output weight file")->required();
    tsk->add_option("--log", tsk_log, "TrainRecord JSON");
    tsk_flags.attach(tsk);

    // infer
    auto* inf = app.add_subcommand("infer", "Run a base network on an image");
    std::string inf_model, inf_in, inf_out;
    inf->add_option("--model", inf_model, "Weight file")->required();
    inf->add_option("--in", inf_in, "Input PPM/PGM")->required();
    inf->add_option("--out", inf_out, "Output probability PGM")->required();

    // train-ensemble
    auto* ten = app.add_subcommand("train-ensemble", "Train the second-level network of a stacking ensemble");
    std::string ten_spec, ten_manifest, ten_split, ten_cfg, ten_out, ten_log;
    TrainFlags ten_flags;
    ten_flags.arch = "levels=3,base=16,inception=false,dense=false";
    ten->add_option("--spec", ten_spec, "Ensemble spec")->required();
    ten->add_option("--manifest", ten_manifest, "Dataset manifest")->required();
    ten->add_option("--split", ten_split, "Split JSON");
    ten->add_option("--train-cfg", ten_cfg, "JSON file with arch/epochs/lr/batch_size/bce_weight/dice_weight/seed");
    ten->add_option("--out", ten_out, "Weight file (default: the spec's second_level)");
    ten->add_option("--log", ten_log, "TrainRecord JSON");
    ten_flags.attach(ten);

    // ensemble-infer
    auto* ein = app.add_subcommand("ensemble-infer", "Run an ensemble on an image");
    std::string ein_spec, ein_in, ein_out;
    ein->add_option("--spec", ein_spec, "Ensemble spec")->required();
    ein->add_option("--in", ein_in, "Input PPM")->required();
    ein->add_option("--out", ein_out, "Output probability PGM")->required();

    // evaluate
    auto* evl = app.add_subcommand("evaluate", "Score predicted maps against truth masks");
    std::string evl_pred, evl_truth, evl_out;
    double evl_threshold = 0.5;
    int evl_steps = 256;
    evl->add_option("--pred-dir", evl_pred, "Directory of predicted PGMs")->required();
    evl->add_option("--truth-dir", evl_truth, "Directory of truth PGMs")->required();
    evl->add_option("--out", evl_out, "Report JSON")->required();
    evl->add_option("--threshold", evl_threshold, "Binarization threshold")->capture_default_str();
    evl->add_option("--steps", evl_steps, "PR curve thresholds")->capture_default_str();

    // pr-curve
    auto* prc = app.add_subcommand("pr-curve", "Micro-averaged precision-recall curve");
    std::string prc_pred, prc_truth, prc_out;
    int prc_steps = 256;
    prc->add_option("--pred-dir", prc_pred, "Directory of predicted PGMs")->required();
    prc->add_option("--truth-dir", prc_truth, "Directory of truth PGMs")->required();
    prc->add_option("--steps", prc_steps, "Thresholds")->capture_default_str();
    prc->add_option("--out", prc_out, "Curve JSON [[t,p,r],...]")->required();

    // wilcoxon
    auto* wil = app.add_subcommand("wilcoxon", "Two-tailed signed-rank test on per-image F-scores");
    std::string wil_a, wil_b, wil_method = "auto", wil_out;
    wil->add_option("--a", wil_a, "First report JSON")->required();
    wil->add_option("--b", wil_b, "Second report JSON")->required();
    wil->add_option("--method", wil_method, "Null distribution")
        ->check(CLI::IsMember({"auto", "exact", "normal"}))
        ->capture_default_str();
    wil->add_option("--out", wil_out, "Result JSON (also printed)");

    // overlay
    auto* ovl = app.add_subcommand("overlay", "Render false positives red and false negatives blue");
    std::string ovl_in, ovl_pred, ovl_truth, ovl_out;
    double ovl_threshold = 0.5;
    ovl->add_option("--in", ovl_in, "Input PPM")->required();
    ovl->add_option("--pred", ovl_pred, "Predicted PGM")->required();
    ovl->add_option("--truth", ovl_truth, "Truth PGM")->required();
    ovl->add_option("--out", ovl_out, "Output PPM")->required();
    ovl->add_option("--threshold", ovl_threshold, "Binarization threshold")->capture_default_str();

    // reproduce-desk
    auto* rep = app.add_subcommand("reproduce-desk", "Run the full experiment on synthetic data");
    DeskConfig desk;
    std::string rep_out = "desk_out", rep_arch = skinny::format_arch(desk.arch);
    rep->add_option("--seed", desk.seed, "Global seed")->capture_default_str();
    rep->add_option("--out", rep_out, "Output directory")->capture_default_str();
    rep->add_option("--n", desk.samples, "Synthetic samples")->capture_default_str();
    rep->add_option("--size", desk.size, "Image side length")->capture_default_str();
    rep->add_option("--bins", desk.bins, "BC bins per channel")->capture_default_str();
    rep->add_option("--arch", rep_arch, "Network shape for every model")->capture_default_str();
    rep->add_option("--epochs", desk.epochs, "Epochs per base model")->capture_default_str();
    rep->add_option("--ensemble-epochs", desk.ensemble_epochs, "Epochs for the second level")->capture_default_str();
    rep->add_option("--lr", desk.lr, "Adam learning rate")->capture_default_str();
    rep->add_option("--batch", desk.batch_size, "Mini-batch size")->capture_default_str();

    try {
        app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        err << app.help();
        return kUserError;
    }

    try {
        if (*gen) {
            save_dataset(gen_out, generate_synthetic_dataset(gen_n, gen_size, gen_seed));
            out << "wrote " << gen_n << " samples to " << gen_out << "\n";
        } else if (*spl) {
            const auto records = read_manifest(spl_manifest);
            std::vector<std::string> ids;
            for (const auto& r : records)
                ids.push_back(r.id);
            write_split(spl_out, split_dataset(ids, {1.0 - spl_val - spl_test, spl_val, spl_test}, spl_seed));
        } else if (*tbc) {
            const auto s = load_split_samples(tbc_manifest, tbc_split);
            const auto hist = bayes::fit_histograms(s.train, tbc_bins);
            bayes::save_histograms(tbc_out, hist);
            out << "skin pixels " << hist.n_skin << ", non-skin pixels " << hist.n_nonskin << "\n";
        } else if (*bci) {
            const auto hist = bayes::load_histograms(bci_hist);
            write_prob_map(bci_out, bayes::bc_prob_map(hist, read_image(bci_in), {{}, bci_alpha}));
        } else if (*tsk) {
            const auto s = load_split_samples(tsk_manifest, tsk_split);
            auto arch = tsk_flags.network();
            const auto tcfg = tsk_flags.training();
            train::TrainResult r;
            if (tsk_channels == "stack") {
                if (tsk_spec.empty())
                    throw ContractError("--channels stack needs --spec");
                const auto sources = load_sources(ensemble::load_spec(tsk_spec));
                r = ensemble::train_second_level(sources, s.train, s.validation, arch, tcfg);
            } else {
                const train::Branch branch = train::parse_branch(tsk_branch);
                std::optional<bayes::ColorHistogramPair> hist;
                if (!tsk_bc.empty())
                    hist = bayes::load_histograms(tsk_bc);
                r = train_base(s.train, s.validation, parse_channels(tsk_channels), branch, hist ? &*hist : nullptr,
                               arch, tcfg);
            }
            finish_training(r, tsk_out, tsk_log, out);
        } else if (*inf) {
            const auto model = skinny::load_weights(inf_model);
            const Image img = read_image(inf_in);
            write_prob_map(inf_out, img.channels() == 3 ? ensemble::base_model_map(model, img) : skinny::forward(model, img));
        } else if (*ten) {
            TrainFlags f = ten_flags;
            if (!ten_cfg.empty()) {
                nlohmann::json j;
                try {
                    j = nlohmann::json::parse(read_text(ten_cfg));
                } catch (const nlohmann::json::exception& e) {
                    throw ParseError(ParseErrorKind::BadFormat, std::string("train config: ") + e.what());
                }
                // Explicit command-line flags take precedence over the file.
                auto take = [&](const char* key, const char* flag, auto& field) {
                    if (j.contains(key) && ten->count(flag) == 0)
                        field = j.at(key).get<std::decay_t<decltype(field)>>();
                };
                take("arch", "--arch", f.arch);
                take("epochs", "--epochs", f.epochs);
                take("lr", "--lr", f.lr);
                take("batch_size", "--batch", f.batch);
                take("bce_weight", "--bce-weight", f.bce_weight);
                take("dice_weight", "--dice-weight", f.dice_weight);
                take("seed", "--seed", f.seed);
            }
            const auto spec = ensemble::load_spec(ten_spec);
            if (spec.scheme != ensemble::Scheme::Stack)
                throw ContractError("only stacking ensembles have a second level to train");
            const auto s = load_split_samples(ten_manifest, ten_split);
            const auto r = ensemble::train_second_level(load_sources(spec), s.train, s.validation, f.network(),
                                                        f.training());
            finish_training(r, ten_out.empty() ? spec.second_level.string() : ten_out, ten_log, out);
        } else if (*ein) {
            const auto loaded = ensemble::load(ensemble::load_spec(ein_spec));
            write_prob_map(ein_out, ensemble::infer(loaded, read_image(ein_in)));
        } else if (*evl) {
            const auto d = load_dir_pairs(evl_pred, evl_truth);
            const auto report = eval::evaluate(d.preds, d.truths, d.ids, evl_threshold, evl_steps);
            eval::save_report(evl_out, report);
            char line[160];
            std::snprintf(line, sizeof line, "F-score %.4f  precision %.4f  recall %.4f  (%zu images)\n",
                          report.f_score, report.precision, report.recall, d.ids.size());
            out << line;
        } else if (*prc) {
            const auto d = load_dir_pairs(prc_pred, prc_truth);
            write_text(prc_out, curve_json(eval::pr_curve(d.preds, d.truths, prc_steps)).dump(2) + "\n");
        } else if (*wil) {
            const auto [a, b] = eval::paired_scores(eval::load_report(wil_a), eval::load_report(wil_b));
            const auto w = wil_method == "exact"    ? eval::wilcoxon_exact(a, b)
                           : wil_method == "normal" ? eval::wilcoxon_normal(a, b)
                                                    : eval::wilcoxon_signed_rank(a, b);
            const std::string text = wilcoxon_json(w).dump(2) + "\n";
            if (!wil_out.empty())
                write_text(wil_out, text);
            out << text;
        } else if (*ovl) {
            const auto pred = bayes::binarize(read_prob_map(ovl_pred), ovl_threshold);
            write_image(ovl_out, eval::render_overlay(read_image(ovl_in), pred, read_mask(ovl_truth)));
        } else if (*rep) {
            desk.arch = skinny::parse_arch(rep_arch, desk.arch);
            reproduce_desk(desk, rep_out, out);
        }
    } catch (const Error& e) {
        err << "skinseg: " << error_class(e) << ": " << e.what() << "\n";
        return kUserError;
    } catch (const std::exception& e) {
        err << "skinseg: internal error: " << e.what() << "\n";
        return kInternalError;
    }
    return kOk;
}

}  // namespace skinseg::cli
