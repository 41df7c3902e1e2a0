#pragma once

#include "geo/manifest.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace geo::eval {

enum class SplitCategory { Easy, Unconfident, Misclassified, Unscored };

const char* category_name(SplitCategory c);

// Default reading: entries without a score are Unscored; |s - 0.5| <= band
// is Unconfident (chance-level prequalifier); otherwise the wrong side of
// 0.5 is Misclassified and the rest Easy. The nested reading gives
// Misclassified precedence over the band: any wrong-side score (s != 0.5)
// is Misclassified, the remaining in-band ones Unconfident. Both are
// partitions.
std::vector<SplitCategory> split(const std::vector<ManifestEntry>& entries,
                                 double band, bool nested_misclassified = false);

struct RocPoint {
    double threshold = 0;
    double fpr = 0;
    double tpr = 0;
};

// Points run from the +infinity sentinel at (0,0) down through each unique
// score to (1,1). AUC accumulates the trapezoid numerator in integers, so
// it equals pairwise concordance (ties counted half) bit-exactly.
struct RocCurve {
    std::vector<RocPoint> points;
    double auc = 0;
    int n_real = 0, n_gen = 0;
};

// scores are P(real), labels 1 = real. Errors: size mismatch, empty, or a
// single-class input.
RocCurve roc(const std::vector<double>& scores, const std::vector<int>& labels);

// header "threshold,fpr,tpr", one point per line
void write_roc_csv(const std::string& path, const RocCurve& curve);

// Cue agreement over generated images only: a cue "detects" when its score
// falls below 0.5. chi2 is the 1-dof independence statistic (no continuity
// correction) for the line-segment x perspective-field margin; a degenerate
// margin gives chi2 = 0, p = 1.
struct AgreementTable {
    long long counts[2][2][2] = {}; // [ls][pf][os], index 0 = Yes
    long long total = 0;
    double chi2_ls_pf = 0;
    double p_value = 1.0;
};

AgreementTable agreement(const std::vector<double>& ls, const std::vector<double>& pf,
                         const std::vector<double>& os, const std::vector<int>& labels);

// exposed for the statistic itself; p uses the 1-dof survival function
void chi2_2x2(long long a, long long b, long long c, long long d,
              double& chi2, double& p);

std::string format_agreement(const AgreementTable& t);

// ---- report bundle ----

struct ReportRequest {
    std::vector<ManifestEntry> entries;
    // cue name -> score per entry (aligned with entries; NaN = unscored)
    std::vector<std::pair<std::string, std::vector<double>>> cue_scores;
    double band = 0.1;
    bool nested_misclassified = false;
    bool svg = false;
    std::string out_dir;
};

struct ReportSummaryRow {
    std::string cue;
    std::string category;
    double auc = 0;
    int n_real = 0, n_gen = 0;
};

// Writes roc_<cue>_<category>.csv for every pair with both classes
// present, summary.csv + summary.txt, agreement.txt when the ls/pf/os
// cues are all given, and one roc_<category>.svg per category when asked.
// Returns the summary rows in emission order.
std::vector<ReportSummaryRow> report(const ReportRequest& req);

} // namespace geo::eval
