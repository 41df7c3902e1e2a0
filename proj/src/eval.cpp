#include "geo/eval.hpp"

#include "geo/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace geo::eval {

const char* category_name(SplitCategory c) {
    switch (c) {
    case SplitCategory::Easy: return "easy";
    case SplitCategory::Unconfident: return "unconfident";
    case SplitCategory::Misclassified: return "misclassified";
    case SplitCategory::Unscored: return "unscored";
    }
    return "unknown";
}

std::vector<SplitCategory> split(const std::vector<ManifestEntry>& entries,
                                 double band, bool nested_misclassified) {
    if (band < 0)
        throw error("split: band must be nonnegative");
    std::vector<SplitCategory> out(entries.size(), SplitCategory::Unscored);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (!e.prequalifier_score) {
            out[i] = SplitCategory::Unscored;
            continue;
        }
        double s = *e.prequalifier_score;
        bool wrong_side = e.label ? (s < 0.5) : (s > 0.5);
        bool in_band = std::fabs(s - 0.5) <= band;
        if (nested_misclassified) {
            if (wrong_side)
                out[i] = SplitCategory::Misclassified;
            else if (s == 0.5 || in_band)
                out[i] = SplitCategory::Unconfident;
            else
                out[i] = SplitCategory::Easy;
        } else {
            if (in_band)
                out[i] = SplitCategory::Unconfident;
            else if (wrong_side)
                out[i] = SplitCategory::Misclassified;
            else
                out[i] = SplitCategory::Easy;
        }
    }
    return out;
}

RocCurve roc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw error("roc: scores and labels differ in length");
    if (scores.empty())
        throw error("roc: empty input");
    for (double s : scores)
        if (!std::isfinite(s))
            throw error("roc: score is not finite");

    RocCurve curve;
    for (int l : labels)
        (l ? curve.n_real : curve.n_gen) += 1;
    if (curve.n_real == 0 || curve.n_gen == 0)
        throw error("roc: needs both classes");

    std::vector<std::size_t> idx(scores.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
        idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
    });

    curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    std::int64_t tp = 0, fp = 0, tp_prev = 0, fp_prev = 0;
    std::int64_t num = 0; // trapezoid numerator, exact in integers
    std::size_t i = 0;
    while (i < idx.size()) {
        double t = scores[idx[i]];
        while (i < idx.size() && scores[idx[i]] == t) {
            (labels[idx[i]] ? tp : fp) += 1;
            ++i;
        }
        num += (fp - fp_prev) * (tp + tp_prev);
        curve.points.push_back({t, static_cast<double>(fp) / curve.n_gen,
                                static_cast<double>(tp) / curve.n_real});
        tp_prev = tp;
        fp_prev = fp;
    }
    curve.auc = static_cast<double>(num) /
                (2.0 * static_cast<double>(curve.n_real) * static_cast<double>(curve.n_gen));
    return curve;
}

void write_roc_csv(const std::string& path, const RocCurve& curve) {
    std::ofstream out(path);
    if (!out)
        throw error(path + ": cannot open for writing");
    out << "threshold,fpr,tpr\n";
    for (const auto& p : curve.points)
        out << format_double(p.threshold) << "," << format_double(p.fpr) << ","
            << format_double(p.tpr) << "\n";
    if (!out)
        throw error(path + ": write failed");
}

void chi2_2x2(long long a, long long b, long long c, long long d,
              double& chi2, double& p) {
    double n = static_cast<double>(a + b + c + d);
    double r1 = static_cast<double>(a + b), r0 = static_cast<double>(c + d);
    double c1 = static_cast<double>(a + c), c0 = static_cast<double>(b + d);
    if (n == 0 || r1 == 0 || r0 == 0 || c1 == 0 || c0 == 0) {
        chi2 = 0;
        p = 1.0;
        return;
    }
    double det = static_cast<double>(a) * static_cast<double>(d) -
                 static_cast<double>(b) * static_cast<double>(c);
    chi2 = n * det * det / (r1 * r0 * c1 * c0);
    p = std::erfc(std::sqrt(chi2 / 2.0));
}

AgreementTable agreement(const std::vector<double>& ls, const std::vector<double>& pf,
                         const std::vector<double>& os, const std::vector<int>& labels) {
    if (ls.size() != labels.size() || pf.size() != labels.size() || os.size() != labels.size())
        throw error("agreement: score vectors and labels differ in length");
    AgreementTable t;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0)
            continue; // generated images only
        if (!std::isfinite(ls[i]) || !std::isfinite(pf[i]) || !std::isfinite(os[i]))
            continue;
        int a = ls[i] < 0.5 ? 0 : 1; // 0 = detected as generated
        int b = pf[i] < 0.5 ? 0 : 1;
        int c = os[i] < 0.5 ? 0 : 1;
        t.counts[a][b][c] += 1;
        t.total += 1;
    }
    long long yy = t.counts[0][0][0] + t.counts[0][0][1];
    long long yn = t.counts[0][1][0] + t.counts[0][1][1];
    long long ny = t.counts[1][0][0] + t.counts[1][0][1];
    long long nn = t.counts[1][1][0] + t.counts[1][1][1];
    chi2_2x2(yy, yn, ny, nn, t.chi2_ls_pf, t.p_value);
    return t;
}

std::string format_agreement(const AgreementTable& t) {
    std::ostringstream out;
    out << "lines  field  shadows  count  share\n";
    const char* word[2] = {"Yes", "No"};
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c) {
                double pct = t.total ? 100.0 * t.counts[a][b][c] / t.total : 0.0;
                char buf[96];
                std::snprintf(buf, sizeof buf, "%-6s %-6s %-8s %5lld  %6.2f%%\n",
                              word[a], word[b], word[c], t.counts[a][b][c], pct);
                out << buf;
            }
    out << "total " << t.total << " generated images\n";
    out << "chi2(lines, field) = " << format_double(t.chi2_ls_pf)
        << "  p = " << format_double(t.p_value) << "\n";
    return out.str();
}

// ---- report bundle ----

namespace {

struct Curve {
    std::string cue;
    RocCurve roc;
};

const char* kPalette[] = {"#1b6ca8", "#c2452d", "#2e7d32", "#8e44ad", "#b8860b", "#444444"};

void write_roc_svg(const std::string& path, const std::string& title,
                   const std::vector<Curve>& curves) {
    const int size = 480, margin = 48, plot = size - 2 * margin;
    auto px = [&](double fpr) { return margin + fpr * plot; };
    auto py = [&](double tpr) { return margin + (1.0 - tpr) * plot; };

    std::ofstream out(path);
    if (!out)
        throw error(path + ": cannot open for writing");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 200
        << "\" height=\"" << size << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << plot
        << "\" height=\"" << plot << "\" fill=\"white\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\""
        << py(1) << "\" stroke=\"#aaaaaa\" stroke-dasharray=\"4 4\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        double f = i / 4.0;
        out << "<text x=\"" << px(f) << "\" y=\"" << size - margin + 16
            << "\" text-anchor=\"middle\">" << format_double(f) << "</text>\n";
        out << "<text x=\"" << margin - 8 << "\" y=\"" << py(f) + 4
            << "\" text-anchor=\"end\">" << format_double(f) << "</text>\n";
    }
    out << "<text x=\"" << size / 2 << "\" y=\"" << size - 8
        << "\" text-anchor=\"middle\">false positive rate</text>\n";
    out << "<text x=\"14\" y=\"" << size / 2
        << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " << size / 2
        << ")\">true positive rate</text>\n";
    out << "<text x=\"" << size / 2 << "\" y=\"" << margin - 16
        << "\" text-anchor=\"middle\">" << title << "</text>\n";

    for (std::size_t k = 0; k < curves.size(); ++k) {
        const char* color = kPalette[k % (sizeof kPalette / sizeof *kPalette)];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& p : curves[k].roc.points)
            out << format_double(px(p.fpr)) << "," << format_double(py(p.tpr)) << " ";
        out << "\"/>\n";
        double ly = margin + 16.0 * (static_cast<double>(k) + 1);
        out << "<line x1=\"" << size - 36 << "\" y1=\"" << ly << "\" x2=\"" << size - 12
            << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
        char label[128];
        std::snprintf(label, sizeof label, "%s (auc %.4f)", curves[k].cue.c_str(),
                      curves[k].roc.auc);
        out << "<text x=\"" << size - 6 << "\" y=\"" << ly + 4 << "\">" << label << "</text>\n";
    }
    out << "</svg>\n";
    if (!out)
        throw error(path + ": write failed");
}

} // namespace

std::vector<ReportSummaryRow> report(const ReportRequest& req) {
    if (req.entries.empty())
        throw error("report: no entries");
    for (const auto& [cue, scores] : req.cue_scores)
        if (scores.size() != req.entries.size())
            throw error("report: cue '" + cue + "' has " + std::to_string(scores.size()) +
                        " scores for " + std::to_string(req.entries.size()) + " entries");

    std::filesystem::create_directories(req.out_dir);
    auto categories = split(req.entries, req.band, req.nested_misclassified);

    // "all" plus the four prequalifier categories, in a fixed order
    std::vector<std::pair<std::string, std::optional<SplitCategory>>> groups;
    groups.emplace_back("all", std::nullopt);
    for (SplitCategory c : {SplitCategory::Easy, SplitCategory::Unconfident,
                            SplitCategory::Misclassified, SplitCategory::Unscored})
        groups.emplace_back(category_name(c), c);

    std::vector<ReportSummaryRow> rows;
    std::map<std::string, std::vector<Curve>> per_group_curves;

    for (const auto& [cue, scores] : req.cue_scores) {
        for (const auto& [gname, gcat] : groups) {
            std::vector<double> s;
            std::vector<int> y;
            for (std::size_t i = 0; i < req.entries.size(); ++i) {
                if (gcat && categories[i] != *gcat)
                    continue;
                if (!std::isfinite(scores[i]))
                    continue;
                s.push_back(scores[i]);
                y.push_back(req.entries[i].label);
            }
            bool both = false;
            if (!y.empty()) {
                bool any0 = false, any1 = false;
                for (int l : y)
                    (l ? any1 : any0) = true;
                both = any0 && any1;
            }
            if (!both)
                continue;
            RocCurve curve = roc(s, y);
            write_roc_csv(req.out_dir + "/roc_" + cue + "_" + gname + ".csv", curve);
            rows.push_back({cue, gname, curve.auc, curve.n_real, curve.n_gen});
            per_group_curves[gname].push_back({cue, std::move(curve)});
        }
    }

    {
        std::ofstream out(req.out_dir + "/summary.csv");
        if (!out)
            throw error(req.out_dir + "/summary.csv: cannot open for writing");
        out << "cue,category,auc,n_real,n_generated\n";
        for (const auto& r : rows)
            out << r.cue << "," << r.category << "," << format_double(r.auc) << ","
                << r.n_real << "," << r.n_gen << "\n";
    }
    {
        std::ofstream out(req.out_dir + "/summary.txt");
        if (!out)
            throw error(req.out_dir + "/summary.txt: cannot open for writing");
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-12s %-14s %8s %7s %7s\n", "cue", "category", "auc",
                      "real", "gen");
        out << buf;
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof buf, "%-12s %-14s %8.4f %7d %7d\n", r.cue.c_str(),
                          r.category.c_str(), r.auc, r.n_real, r.n_gen);
            out << buf;
        }
    }

    const std::vector<double>*lsv = nullptr, *pfv = nullptr, *osv = nullptr;
    for (const auto& [cue, scores] : req.cue_scores) {
        if (cue == "lines")
            lsv = &scores;
        else if (cue == "field")
            pfv = &scores;
        else if (cue == "shadows")
            osv = &scores;
    }
    if (lsv && pfv && osv) {
        std::vector<int> labels(req.entries.size());
        for (std::size_t i = 0; i < req.entries.size(); ++i)
            labels[i] = req.entries[i].label;
        AgreementTable t = agreement(*lsv, *pfv, *osv, labels);
        std::ofstream out(req.out_dir + "/agreement.txt");
        if (!out)
            throw error(req.out_dir + "/agreement.txt: cannot open for writing");
        out << format_agreement(t);
    }

    if (req.svg)
        for (const auto& [gname, curves] : per_group_curves)
            write_roc_svg(req.out_dir + "/roc_" + gname + ".svg", "roc: " + gname, curves);

    return rows;
}

} // namespace geo::eval
