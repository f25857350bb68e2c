#pragma once

#include <string>
#include <vector>

namespace sepsa {

struct ScoreEntry {
    std::string utt_id;
    double score = 0.0;
    bool spoof = false;
    std::string attack_id;  // optional
};

struct ScoreSet {
    std::vector<ScoreEntry> entries;

    size_t count_bonafide() const;
    size_t count_spoof() const;
    void validate() const;  // >=1 entry per class, unique utt ids
};

struct EerResult {
    double eer = 0.0;
    double threshold = 0.0;
};

// Threshold sweep over all distinct scores with linear interpolation at the
// FAR/FRR crossing.
EerResult compute_eer(const ScoreSet& scores);

// P(random bonafide outscores random spoof), ties counted 1/2 (rank-sum).
double compute_auc(const ScoreSet& scores);

// ASVspoof-2019-convention normalized tandem detection cost.
struct TDcfParams {
    double p_tar = 0.9405;
    double p_non = 0.0095;
    double p_spoof = 0.05;
    double c_miss_cm = 1.0;
    double c_fa_cm = 10.0;
    double c_miss_asv = 1.0;
    double c_fa_asv = 10.0;
    double p_miss_asv = 0.01;
    double p_fa_asv = 0.01;
    double p_miss_spoof_asv = 0.05;

    double c1() const { return p_tar * (c_miss_cm - c_miss_asv * p_miss_asv) - p_non * c_fa_asv * p_fa_asv; }
    double c2() const { return c_fa_cm * p_spoof * (1.0 - p_miss_spoof_asv); }
    void validate() const;

    static TDcfParams load(const std::string& path);        // flat key=value file
    static TDcfParams parse_text(const std::string& text);
};

struct TdcfResult {
    double min_tdcf = 0.0;
    double threshold = 0.0;
};

TdcfResult compute_min_tdcf(const ScoreSet& scores, const TDcfParams& params);

// The unified-performance comparator: sum of the LA and PA equal error rates.
double cumulative_eer(double eer_la, double eer_pa);

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------
struct SystemRow {
    std::string system;
    double eer_la = 0.0;
    double tdcf_la = 0.0;
    double eer_pa = 0.0;
    double tdcf_pa = 0.0;

    double cumulative() const { return eer_la + eer_pa; }
};

enum class ReportFormat { kText, kCsv, kPlotData };

ReportFormat parse_report_format(const std::string& name);

// Rows are sorted by cumulative EER ascending. kPlotData emits JSON x/y
// series for bar and error-bar charts (one error bar per system).
std::string emit_report(std::vector<SystemRow> rows, ReportFormat format);
std::vector<SystemRow> parse_report_csv(const std::string& text);

// ---------------------------------------------------------------------------
// Score / key files: `utt<TAB>score` and `utt<TAB>key<TAB>attack`
// ---------------------------------------------------------------------------
void write_score_file(const std::string& path,
                      const std::vector<std::pair<std::string, double>>& scores);
ScoreSet load_score_set(const std::string& scores_path, const std::string& keys_path);

}  // namespace sepsa
