#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "skinseg/imgio.hpp"

namespace skinseg::eval {

struct Confusion {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tn = 0;

    std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
    Confusion& operator+=(const Confusion& o) noexcept
    {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        tn += o.tn;
        return *this;
    }
    friend bool operator==(const Confusion&, const Confusion&) = default;
};

Confusion confusion(const BinaryMask& pred, const BinaryMask& truth);

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f_score = 0.0;
    /// tp + fp == 0: precision reported as 0.
    bool precision_undefined = false;
    /// tp + fn == 0: recall reported as 0.
    bool recall_undefined = false;
};

Prf prf(const Confusion& c);
/// Harmonic mean 2PR/(P+R); 0 when P + R == 0.
double f_score(double precision, double recall);

struct PrPoint {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

/// Micro-averaged curve: for t = k/(steps-1), every map is binarized with p >= t
/// and confusion counts are pooled over all images.
std::vector<PrPoint> pr_curve(std::span<const ProbMap> preds, std::span<const BinaryMask> truths, int steps = 256);

struct WilcoxonResult {
    /// min(W+, W-), using average ranks for tied |differences|.
    double statistic = 0.0;
    double w_plus = 0.0;
    double w_minus = 0.0;
    double p_two_tailed = 1.0;
    /// Pairs left after dropping zero differences.
    std::size_t n_used = 0;
    bool exact = false;
};

/// Paired two-tailed signed-rank test. Zero differences are dropped; the null
/// distribution is exact for up to 12 remaining pairs, normal (tie- and
/// continuity-corrected) above that.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);
/// Forces the exact null distribution regardless of n (n <= 60).
WilcoxonResult wilcoxon_exact(std::span<const double> a, std::span<const double> b);
/// Forces the normal approximation regardless of n.
WilcoxonResult wilcoxon_normal(std::span<const double> a, std::span<const double> b);

/// Dimmed grayscale copy of `img` with false positives painted red and false negatives blue.
Image render_overlay(const Image& img, const BinaryMask& pred, const BinaryMask& truth);

struct ImageScore {
    std::string id;
    double f_score = 0.0;
};

struct EvalReport {
    Confusion confusion;
    double precision = 0.0;
    double recall = 0.0;
    double f_score = 0.0;
    /// Means of the per-image precision, recall and F-score.
    Prf per_image_mean;
    std::vector<ImageScore> per_image;
    std::vector<PrPoint> pr_curve;
};

/// Headline metrics are pixel-pooled at `threshold`; per-image F-scores are kept for
/// significance testing.
EvalReport evaluate(std::span<const ProbMap> preds, std::span<const BinaryMask> truths,
                    std::span<const std::string> ids, double threshold = 0.5, int pr_steps = 256);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& json);
void save_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport load_report(const std::filesystem::path& path);

/// Pairs per-image scores of two reports by id (order of `a`).
std::pair<std::vector<double>, std::vector<double>> paired_scores(const EvalReport& a, const EvalReport& b);

/// "Method,F-score,Precision,Recall" rows with four decimals.
std::string table_csv(const std::vector<std::pair<std::string, EvalReport>>& rows);

}  // namespace skinseg::eval
