#include "skinseg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "skinseg/error.hpp"

namespace skinseg::eval {

namespace {

void check_same_dims(const BinaryMask& a, const BinaryMask& b)
{
    if (a.height() != b.height() || a.width() != b.width())
        throw ContractError("mask dimensions differ");
}

// Signed differences with zeros dropped, plus doubled average ranks of |d| so that
// all rank arithmetic stays in integers.
struct RankedDiffs {
    std::vector<double> diffs;
    std::vector<long long> rank2;
    std::vector<long long> tie_sizes;
};

RankedDiffs rank_differences(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw ContractError("Wilcoxon test needs paired samples of equal length");
    if (a.size() < 5)
        throw ContractError("Wilcoxon test needs at least 5 pairs");
    RankedDiffs r;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (!std::isfinite(d))
            throw ContractError("Wilcoxon input contains non-finite scores");
        if (d != 0.0)
            r.diffs.push_back(d);
    }
    const std::size_t n = r.diffs.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i)
        order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return std::abs(r.diffs[x]) < std::abs(r.diffs[y]); });
    r.rank2.assign(n, 0);
    for (std::size_t first = 0; first < n;) {
        std::size_t last = first;
        while (last + 1 < n && std::abs(r.diffs[order[last + 1]]) == std::abs(r.diffs[order[first]]))
            ++last;
        for (std::size_t k = first; k <= last; ++k)
            r.rank2[order[k]] = static_cast<long long>(first + last + 2);
        r.tie_sizes.push_back(static_cast<long long>(last - first + 1));
        first = last + 1;
    }
    return r;
}

WilcoxonResult base_result(const RankedDiffs& r)
{
    WilcoxonResult res;
    res.n_used = r.diffs.size();
    long long wp2 = 0, wm2 = 0;
    for (std::size_t i = 0; i < r.diffs.size(); ++i)
        (r.diffs[i] > 0 ? wp2 : wm2) += r.rank2[i];
    res.w_plus = double(wp2) / 2.0;
    res.w_minus = double(wm2) / 2.0;
    res.statistic = std::min(res.w_plus, res.w_minus);
    return res;
}

double exact_p(const RankedDiffs& r, double w_plus)
{
    // Distribution of the doubled positive-rank sum under independent fair signs.
    long long total2 = 0;
    for (auto v : r.rank2)
        total2 += v;
    std::vector<double> counts(std::size_t(total2) + 1, 0.0);
    counts[0] = 1.0;
    long long reach = 0;
    for (auto v : r.rank2) {
        for (long long s = reach; s >= 0; --s)
            if (counts[std::size_t(s)] != 0.0)
                counts[std::size_t(s + v)] += counts[std::size_t(s)];
        reach += v;
    }
    const long long obs2 = std::llround(w_plus * 2.0);
    const long long dev = std::llabs(2 * obs2 - total2);  // |2 W+ - mean|, all doubled again
    double extreme = 0.0;
    for (long long s = 0; s <= total2; ++s)
        if (std::llabs(2 * s - total2) >= dev)
            extreme += counts[std::size_t(s)];
    return std::min(1.0, extreme / std::ldexp(1.0, int(r.diffs.size())));
}

double normal_p(const RankedDiffs& r, double w_plus)
{
    const double n = double(r.diffs.size());
    const double mean = n * (n + 1.0) / 4.0;
    double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
    for (auto t : r.tie_sizes)
        var -= (double(t) * t * t - double(t)) / 48.0;
    if (var <= 0.0)
        return 1.0;
    const double z = std::max(0.0, std::abs(w_plus - mean) - 0.5) / std::sqrt(var);
    return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

enum class Branch { Auto, Exact, Normal };

WilcoxonResult wilcoxon(std::span<const double> a, std::span<const double> b, Branch branch)
{
    const RankedDiffs r = rank_differences(a, b);
    WilcoxonResult res = base_result(r);
    if (res.n_used == 0) {
        res.p_two_tailed = 1.0;
        res.exact = true;
        return res;
    }
    const bool exact = branch == Branch::Exact || (branch == Branch::Auto && res.n_used <= 12);
    if (exact && res.n_used > 60)
        throw ContractError("exact Wilcoxon distribution limited to 60 pairs");
    res.exact = exact;
    res.p_two_tailed = exact ? exact_p(r, res.w_plus) : normal_p(r, res.w_plus);
    return res;
}

std::string fixed4(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

}  // namespace

Confusion confusion(const BinaryMask& pred, const BinaryMask& truth)
{
    check_same_dims(pred, truth);
    Confusion c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i], t = truth[i];
        if (p && t)
            ++c.tp;
        else if (p)
            ++c.fp;
        else if (t)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

double f_score(double precision, double recall)
{
    return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

Prf prf(const Confusion& c)
{
    Prf m;
    m.precision_undefined = c.tp + c.fp == 0;
    m.recall_undefined = c.tp + c.fn == 0;
    m.precision = m.precision_undefined ? 0.0 : double(c.tp) / double(c.tp + c.fp);
    m.recall = m.recall_undefined ? 0.0 : double(c.tp) / double(c.tp + c.fn);
    m.f_score = f_score(m.precision, m.recall);
    return m;
}

std::vector<PrPoint> pr_curve(std::span<const ProbMap> preds, std::span<const BinaryMask> truths, int steps)
{
    if (preds.empty())
        throw ContractError("PR curve needs at least one map");
    if (preds.size() != truths.size())
        throw ContractError("PR curve needs one truth mask per map");
    if (steps < 2)
        throw ContractError("PR curve needs at least 2 threshold steps");

    std::vector<double> pos, neg;
    for (std::size_t k = 0; k < preds.size(); ++k) {
        if (preds[k].height() != truths[k].height() || preds[k].width() != truths[k].width())
            throw ContractError("map and mask dimensions differ");
        for (std::size_t i = 0; i < preds[k].size(); ++i)
            (truths[k][i] ? pos : neg).push_back(preds[k][i]);
    }
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());

    std::vector<PrPoint> curve;
    curve.reserve(std::size_t(steps));
    for (int k = 0; k < steps; ++k) {
        const double t = double(k) / double(steps - 1);
        Confusion c;
        c.tp = std::uint64_t(pos.end() - std::lower_bound(pos.begin(), pos.end(), t));
        c.fn = std::uint64_t(pos.size()) - c.tp;
        c.fp = std::uint64_t(neg.end() - std::lower_bound(neg.begin(), neg.end(), t));
        c.tn = std::uint64_t(neg.size()) - c.fp;
        const Prf m = prf(c);
        curve.push_back({t, m.precision, m.recall});
    }
    return curve;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b)
{
    return wilcoxon(a, b, Branch::Auto);
}

WilcoxonResult wilcoxon_exact(std::span<const double> a, std::span<const double> b)
{
    return wilcoxon(a, b, Branch::Exact);
}

WilcoxonResult wilcoxon_normal(std::span<const double> a, std::span<const double> b)
{
    return wilcoxon(a, b, Branch::Normal);
}

Image render_overlay(const Image& img, const BinaryMask& pred, const BinaryMask& truth)
{
    check_same_dims(pred, truth);
    if (img.height() != pred.height() || img.width() != pred.width())
        throw ContractError("overlay image and masks differ in size");
    if (img.channels() != 1 && img.channels() != 3)
        throw ContractError("overlay needs a 1- or 3-channel image");
    const Image gray = img.channels() == 3 ? to_grayscale(img) : img;
    std::vector<double> out(img.pixel_count() * 3);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        double r, g, b;
        if (pred[i] && !truth[i]) {
            r = 1.0, g = 0.0, b = 0.0;
        } else if (!pred[i] && truth[i]) {
            r = 0.0, g = 0.0, b = 1.0;
        } else {
            r = g = b = 0.5 * gray.data()[i];
        }
        out[3 * i] = r;
        out[3 * i + 1] = g;
        out[3 * i + 2] = b;
    }
    return Image(img.height(), img.width(), 3, std::move(out));
}

EvalReport evaluate(std::span<const ProbMap> preds, std::span<const BinaryMask> truths,
                    std::span<const std::string> ids, double threshold, int pr_steps)
{
    if (preds.empty())
        throw ContractError("evaluation needs at least one prediction");
    if (preds.size() != truths.size() || preds.size() != ids.size())
        throw ContractError("evaluation needs one truth mask and id per prediction");
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw ContractError("evaluation threshold must lie in [0,1]");

    EvalReport rep;
    double sum_p = 0, sum_r = 0, sum_f = 0;
    for (std::size_t k = 0; k < preds.size(); ++k) {
        std::vector<std::uint8_t> bits(preds[k].size());
        for (std::size_t i = 0; i < bits.size(); ++i)
            bits[i] = preds[k][i] >= threshold ? 1 : 0;
        const Confusion c = confusion(BinaryMask(preds[k].height(), preds[k].width(), std::move(bits)), truths[k]);
        rep.confusion += c;
        const Prf m = prf(c);
        sum_p += m.precision;
        sum_r += m.recall;
        sum_f += m.f_score;
        rep.per_image.push_back({ids[k], m.f_score});
    }
    const Prf pooled = prf(rep.confusion);
    rep.precision = pooled.precision;
    rep.recall = pooled.recall;
    rep.f_score = pooled.f_score;
    const double n = double(preds.size());
    rep.per_image_mean.precision = sum_p / n;
    rep.per_image_mean.recall = sum_r / n;
    rep.per_image_mean.f_score = sum_f / n;
    rep.pr_curve = pr_curve(preds, truths, pr_steps);
    return rep;
}

std::string report_to_json(const EvalReport& r)
{
    nlohmann::json j;
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["f_score"] = r.f_score;
    j["confusion"] = {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"fn", r.confusion.fn}, {"tn", r.confusion.tn}};
    j["per_image_mean"] = {{"precision", r.per_image_mean.precision},
                           {"recall", r.per_image_mean.recall},
                           {"f_score", r.per_image_mean.f_score}};
    auto per = nlohmann::json::array();
    for (const auto& s : r.per_image)
        per.push_back({{"id", s.id}, {"f", s.f_score}});
    j["per_image"] = per;
    auto curve = nlohmann::json::array();
    for (const auto& p : r.pr_curve)
        curve.push_back({p.threshold, p.precision, p.recall});
    j["pr_curve"] = curve;
    return j.dump(2);
}

EvalReport report_from_json(const std::string& text)
{
    EvalReport r;
    try {
        const auto j = nlohmann::json::parse(text);
        r.precision = j.at("precision").get<double>();
        r.recall = j.at("recall").get<double>();
        r.f_score = j.at("f_score").get<double>();
        const auto& c = j.at("confusion");
        r.confusion = {c.at("tp").get<std::uint64_t>(), c.at("fp").get<std::uint64_t>(),
                       c.at("fn").get<std::uint64_t>(), c.at("tn").get<std::uint64_t>()};
        if (j.contains("per_image_mean")) {
            const auto& m = j.at("per_image_mean");
            r.per_image_mean.precision = m.at("precision").get<double>();
            r.per_image_mean.recall = m.at("recall").get<double>();
            r.per_image_mean.f_score = m.at("f_score").get<double>();
        }
        for (const auto& s : j.at("per_image"))
            r.per_image.push_back({s.at("id").get<std::string>(), s.at("f").get<double>()});
        for (const auto& p : j.at("pr_curve"))
            r.pr_curve.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(ParseErrorKind::BadFormat, std::string("evaluation report: ") + e.what());
    }
    return r;
}

void save_report(const std::filesystem::path& path, const EvalReport& report)
{
    const std::string s = report_to_json(report) + "\n";
    write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

EvalReport load_report(const std::filesystem::path& path)
{
    const auto bytes = read_file_bytes(path);
    return report_from_json(std::string(bytes.begin(), bytes.end()));
}

std::pair<std::vector<double>, std::vector<double>> paired_scores(const EvalReport& a, const EvalReport& b)
{
    std::map<std::string, double> lookup;
    for (const auto& s : b.per_image)
        lookup[s.id] = s.f_score;
    std::pair<std::vector<double>, std::vector<double>> out;
    for (const auto& s : a.per_image) {
        auto it = lookup.find(s.id);
        if (it == lookup.end())
            throw ContractError("reports do not cover the same images (missing " + s.id + ")");
        out.first.push_back(s.f_score);
        out.second.push_back(it->second);
    }
    if (out.first.size() != b.per_image.size())
        throw ContractError("reports do not cover the same images");
    return out;
}

std::string table_csv(const std::vector<std::pair<std::string, EvalReport>>& rows)
{
    std::ostringstream out;
    out << "Method,F-score,Precision,Recall\n";
    for (const auto& [name, r] : rows)
        out << name << ',' << fixed4(r.f_score) << ',' << fixed4(r.precision) << ',' << fixed4(r.recall) << '\n';
    return out.str();
}

}  // namespace skinseg::eval
