#include "sepsa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "sepsa/errors.hpp"

namespace sepsa {

size_t ScoreSet::count_bonafide() const {
    size_t n = 0;
    for (const auto& e : entries) n += e.spoof ? 0 : 1;
    return n;
}

size_t ScoreSet::count_spoof() const {
    size_t n = 0;
    for (const auto& e : entries) n += e.spoof ? 1 : 0;
    return n;
}

void ScoreSet::validate() const {
    if (count_bonafide() == 0 || count_spoof() == 0)
        throw ContractError("score set needs at least one bonafide and one spoof entry");
    std::vector<std::string> ids;
    ids.reserve(entries.size());
    for (const auto& e : entries) ids.push_back(e.utt_id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        throw ContractError("score set has duplicate utt_ids");
}

namespace {

// Error rates at every candidate threshold (each distinct score, ascending,
// plus a sentinel past the maximum). Decision rule: accept iff score >= tau.
struct SweepPoint {
    double tau;
    double far;  // spoof accepted
    double frr;  // bonafide rejected
};

std::vector<SweepPoint> threshold_sweep(const ScoreSet& scores) {
    std::vector<std::pair<double, bool>> s;  // (score, spoof)
    s.reserve(scores.entries.size());
    for (const auto& e : scores.entries) s.emplace_back(e.score, e.spoof);
    std::sort(s.begin(), s.end());
    const double n_spoof = static_cast<double>(scores.count_spoof());
    const double n_bona = static_cast<double>(scores.count_bonafide());

    std::vector<SweepPoint> sweep;
    size_t i = 0;
    size_t bona_below = 0, spoof_below = 0;
    while (i < s.size()) {
        const double tau = s[i].first;
        // counts of entries strictly below tau
        sweep.push_back({tau, (n_spoof - static_cast<double>(spoof_below)) / n_spoof,
                         static_cast<double>(bona_below) / n_bona});
        while (i < s.size() && s[i].first == tau) {
            if (s[i].second) ++spoof_below;
            else ++bona_below;
            ++i;
        }
    }
    sweep.push_back({s.back().first + 1.0, 0.0, 1.0});  // accept nothing
    return sweep;
}

}  // namespace

EerResult compute_eer(const ScoreSet& scores) {
    scores.validate();
    const auto sweep = threshold_sweep(scores);
    // FAR - FRR falls monotonically from +1 to -1 over the sweep.
    for (size_t i = 0; i < sweep.size(); ++i) {
        const double d = sweep[i].far - sweep[i].frr;
        if (d == 0.0) return {sweep[i].far, sweep[i].tau};
        if (d < 0.0) {
            const double d_prev = sweep[i - 1].far - sweep[i - 1].frr;
            const double alpha = d_prev / (d_prev - d);
            const double eer = sweep[i - 1].frr + alpha * (sweep[i].frr - sweep[i - 1].frr);
            const double tau = sweep[i - 1].tau + alpha * (sweep[i].tau - sweep[i - 1].tau);
            return {eer, tau};
        }
    }
    return {0.0, sweep.back().tau};  // unreachable: sentinel has d = -1
}

double compute_auc(const ScoreSet& scores) {
    scores.validate();
    std::vector<double> bona, spoof;
    for (const auto& e : scores.entries) (e.spoof ? spoof : bona).push_back(e.score);
    std::sort(spoof.begin(), spoof.end());
    // Integer numerator in half-units so the division is the only rounding.
    long long numer2 = 0;
    for (const double b : bona) {
        const auto lo = std::lower_bound(spoof.begin(), spoof.end(), b);
        const auto hi = std::upper_bound(spoof.begin(), spoof.end(), b);
        numer2 += 2 * static_cast<long long>(lo - spoof.begin());  // spoof strictly below
        numer2 += static_cast<long long>(hi - lo);                 // ties count 1/2
    }
    return static_cast<double>(numer2) /
           (2.0 * static_cast<double>(bona.size()) * static_cast<double>(spoof.size()));
}

void TDcfParams::validate() const {
    if (std::abs(p_tar + p_non + p_spoof - 1.0) > 1e-9)
        throw ConfigError("t-DCF priors must sum to 1");
    for (const double r : {p_miss_asv, p_fa_asv, p_miss_spoof_asv})
        if (r < 0.0 || r > 1.0) throw ConfigError("t-DCF ASV rates must lie in [0, 1]");
    for (const double c : {c_miss_cm, c_fa_cm, c_miss_asv, c_fa_asv})
        if (c <= 0.0) throw ConfigError("t-DCF costs must be positive");
    if (c1() <= 0.0 || c2() <= 0.0)
        throw ConfigError("degenerate ASV operating point: C1 and C2 must be positive");
}

TDcfParams TDcfParams::parse_text(const std::string& text) {
    TDcfParams p;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ls(line);
        std::string key, eq;
        double value;
        if (!(ls >> key)) continue;
        if (!(ls >> eq >> value) || eq != "=")
            throw ConfigError("t-DCF params line " + std::to_string(line_no) + ": expected key = value");
        if (key == "p_tar") p.p_tar = value;
        else if (key == "p_non") p.p_non = value;
        else if (key == "p_spoof") p.p_spoof = value;
        else if (key == "c_miss_cm") p.c_miss_cm = value;
        else if (key == "c_fa_cm") p.c_fa_cm = value;
        else if (key == "c_miss_asv") p.c_miss_asv = value;
        else if (key == "c_fa_asv") p.c_fa_asv = value;
        else if (key == "p_miss_asv") p.p_miss_asv = value;
        else if (key == "p_fa_asv") p.p_fa_asv = value;
        else if (key == "p_miss_spoof_asv") p.p_miss_spoof_asv = value;
        else throw ConfigError("t-DCF params: unknown key '" + key + "'");
    }
    p.validate();
    return p;
}

TDcfParams TDcfParams::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("TDcfParams: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str());
}

TdcfResult compute_min_tdcf(const ScoreSet& scores, const TDcfParams& params) {
    scores.validate();
    params.validate();
    const double c1 = params.c1();
    const double c2 = params.c2();
    const double norm = std::min(c1, c2);
    const auto sweep = threshold_sweep(scores);
    TdcfResult best{std::numeric_limits<double>::infinity(), 0.0};
    for (const auto& pt : sweep) {
        const double cost = (c1 * pt.frr + c2 * pt.far) / norm;  // P_miss^cm = frr, P_fa^cm = far
        if (cost < best.min_tdcf) {
            best.min_tdcf = cost;
            best.threshold = pt.tau;
        }
    }
    return best;
}

double cumulative_eer(double eer_la, double eer_pa) { return eer_la + eer_pa; }

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------
ReportFormat parse_report_format(const std::string& name) {
    if (name == "text") return ReportFormat::kText;
    if (name == "csv") return ReportFormat::kCsv;
    if (name == "plot-data") return ReportFormat::kPlotData;
    throw ConfigError("unknown report format '" + name + "' (expected text|csv|plot-data)");
}

std::string emit_report(std::vector<SystemRow> rows, ReportFormat format) {
    if (rows.empty()) throw ContractError("emit_report: no result rows");
    std::stable_sort(rows.begin(), rows.end(),
                     [](const SystemRow& a, const SystemRow& b) { return a.cumulative() < b.cumulative(); });
    std::string out;
    char buf[256];
    switch (format) {
        case ReportFormat::kCsv: {
            out += "system,eer_la,tdcf_la,eer_pa,tdcf_pa,cumulative\n";
            for (const auto& r : rows) {
                std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.system.c_str(),
                              r.eer_la, r.tdcf_la, r.eer_pa, r.tdcf_pa, r.cumulative());
                out += buf;
            }
            break;
        }
        case ReportFormat::kText: {
            std::snprintf(buf, sizeof(buf), "%-32s %10s %10s %10s %10s %12s\n", "system", "EER_LA",
                          "tDCF_LA", "EER_PA", "tDCF_PA", "cumulative");
            out += buf;
            for (const auto& r : rows) {
                std::snprintf(buf, sizeof(buf), "%-32s %10.4f %10.4f %10.4f %10.4f %12.4f\n",
                              r.system.c_str(), r.eer_la, r.tdcf_la, r.eer_pa, r.tdcf_pa, r.cumulative());
                out += buf;
            }
            out += "# cumulative EER = EER_LA + EER_PA\n";
            break;
        }
        case ReportFormat::kPlotData: {
            nlohmann::json j;
            auto& bars = j["bars"];
            auto& err = j["error_bars"];
            for (const auto& r : rows) {
                bars["labels"].push_back(r.system);
                bars["eer_la"].push_back(r.eer_la);
                bars["eer_pa"].push_back(r.eer_pa);
                bars["cumulative"].push_back(r.cumulative());
                err["labels"].push_back(r.system);
                err["center"].push_back((r.eer_la + r.eer_pa) / 2.0);
                err["delta"].push_back(std::abs(r.eer_la - r.eer_pa) / 2.0);
            }
            j["note"] = "cumulative EER = EER_LA + EER_PA";
            out = j.dump(2);
            out += '\n';
            break;
        }
    }
    return out;
}

std::vector<SystemRow> parse_report_csv(const std::string& text) {
    std::vector<SystemRow> rows;
    std::istringstream in(text);
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        std::vector<std::string> cols;
        size_t start = 0;
        while (start <= line.size()) {
            size_t end = line.find(',', start);
            if (end == std::string::npos) end = line.size();
            cols.push_back(line.substr(start, end - start));
            start = end + 1;
        }
        if (cols.size() != 6) throw DataError("report csv: expected 6 columns, got " + line);
        SystemRow r;
        r.system = cols[0];
        r.eer_la = std::stod(cols[1]);
        r.tdcf_la = std::stod(cols[2]);
        r.eer_pa = std::stod(cols[3]);
        r.tdcf_pa = std::stod(cols[4]);
        rows.push_back(r);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Score / key files
// ---------------------------------------------------------------------------
void write_score_file(const std::string& path,
                      const std::vector<std::pair<std::string, double>>& scores) {
    std::ofstream out(path);
    if (!out) throw DataError("write_score_file: cannot open '" + path + "' for writing");
    char buf[64];
    for (const auto& [utt, score] : scores) {
        std::snprintf(buf, sizeof(buf), "%.6f", score);
        out << utt << '\t' << buf << '\n';
    }
}

ScoreSet load_score_set(const std::string& scores_path, const std::string& keys_path) {
    std::ifstream ks(keys_path);
    if (!ks) throw DataError("load_score_set: cannot open keys file '" + keys_path + "'");
    std::map<std::string, std::pair<bool, std::string>> keys;  // utt -> (spoof, attack)
    std::string line;
    int line_no = 0;
    while (std::getline(ks, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string utt, key, attack;
        if (!(ls >> utt >> key)) throw DataError("keys line " + std::to_string(line_no) + ": malformed");
        ls >> attack;  // optional
        if (key != "bonafide" && key != "spoof")
            throw DataError("keys line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        keys[utt] = {key == "spoof", attack};
    }

    std::ifstream ss(scores_path);
    if (!ss) throw DataError("load_score_set: cannot open scores file '" + scores_path + "'");
    ScoreSet set;
    line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        ScoreEntry e;
        if (!(ls >> e.utt_id >> e.score))
            throw DataError("scores line " + std::to_string(line_no) + ": malformed");
        const auto it = keys.find(e.utt_id);
        if (it == keys.end())
            throw DataError("scores line " + std::to_string(line_no) + ": utt '" + e.utt_id +
                            "' missing from keys file");
        e.spoof = it->second.first;
        e.attack_id = it->second.second;
        set.entries.push_back(std::move(e));
    }
    return set;
}

}  // namespace sepsa
