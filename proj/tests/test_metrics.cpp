#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "sepsa/errors.hpp"
#include "sepsa/metrics.hpp"
#include "sepsa/rng.hpp"

#include "test_oracles.hpp"

using namespace sepsa;

using namespace oracles;

TEST_CASE("EER: perfect separation and chance-level sets") {
    EerResult perfect = compute_eer(make_set({0.9, 0.8}, {0.1, 0.2}));
    CHECK(perfect.eer == 0.0);
    EerResult chance = compute_eer(make_set({0.5, 0.5, 0.5}, {0.5, 0.5}));
    CHECK(chance.eer == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS((void)compute_eer(make_set({0.5}, {})), ContractError);
}

TEST_CASE("EER matches the exhaustive threshold-enumeration oracle") {
    Rng rng(404);
    for (int trial = 0; trial < 60; ++trial) {
        ScoreSet set = random_set(rng);
        CHECK(std::abs(compute_eer(set).eer - oracle_eer(set)) < 1e-9);
    }
}

TEST_CASE("EER is invariant under strictly monotone score transforms") {
    Rng rng(405);
    for (int trial = 0; trial < 20; ++trial) {
        ScoreSet set = random_set(rng, 80);
        ScoreSet warped = set;
        for (auto& e : warped.entries) e.score = std::exp(2.0 * e.score) - 0.3;
        CHECK(compute_eer(set).eer == doctest::Approx(compute_eer(warped).eer).epsilon(1e-12));
    }
}

TEST_CASE("AUC: boundary cases and pairwise oracle") {
    CHECK(compute_auc(make_set({0.9, 0.8}, {0.1, 0.2})) == 1.0);
    CHECK(compute_auc(make_set({0.1, 0.2}, {0.8, 0.9})) == 0.0);

    Rng rng(406);
    for (int trial = 0; trial < 60; ++trial) {
        ScoreSet set = random_set(rng, 60);
        CHECK(compute_auc(set) == oracle_auc(set));
    }
}

TEST_CASE("AUC with flipped labels complements to one") {
    Rng rng(407);
    for (int trial = 0; trial < 40; ++trial) {
        ScoreSet set = random_set(rng, 60);
        ScoreSet flipped = set;
        for (auto& e : flipped.entries) e.spoof = !e.spoof;
        CHECK(compute_auc(set) + compute_auc(flipped) == doctest::Approx(1.0).epsilon(1e-15));
    }
}

TEST_CASE("min t-DCF: perfect CM, uninformative CM, sweep oracle") {
    TDcfParams params;
    CHECK(compute_min_tdcf(make_set({0.9, 0.8}, {0.1, 0.2}), params).min_tdcf == 0.0);

    // Uninformative CM (all scores equal): best the sweep can do is the
    // accept-everything endpoint at cost C2/min(C1, C2).
    ScoreSet flat = make_set({0.5, 0.5}, {0.5, 0.5, 0.5});
    const double expected = params.c2() / std::min(params.c1(), params.c2());
    CHECK(compute_min_tdcf(flat, params).min_tdcf == doctest::Approx(expected).epsilon(1e-12));

    Rng rng(408);
    for (int trial = 0; trial < 40; ++trial) {
        ScoreSet set = random_set(rng, 40);
        CHECK(compute_min_tdcf(set, params).min_tdcf == oracle_min_tdcf(set, params));
    }
}

TEST_CASE("min t-DCF is zero iff a zero-error threshold exists") {
    TDcfParams params;
    Rng rng(409);
    for (int trial = 0; trial < 30; ++trial) {
        ScoreSet set = random_set(rng, 40);
        double max_spoof = -1e300, min_bona = 1e300;
        for (const auto& e : set.entries) {
            if (e.spoof) max_spoof = std::max(max_spoof, e.score);
            else min_bona = std::min(min_bona, e.score);
        }
        const bool separable = min_bona > max_spoof;
        CHECK((compute_min_tdcf(set, params).min_tdcf == 0.0) == separable);
    }
}

TEST_CASE("t-DCF parameter validation") {
    TDcfParams bad_priors;
    bad_priors.p_tar = 0.8;
    CHECK_THROWS_AS(bad_priors.validate(), ConfigError);

    TDcfParams degenerate;  // C1 driven negative by an ASV accepting every impostor
    degenerate.p_tar = 0.75;
    degenerate.p_non = 0.2;
    degenerate.p_spoof = 0.05;
    degenerate.p_fa_asv = 1.0;
    CHECK(degenerate.c1() <= 0.0);
    CHECK_THROWS_AS(degenerate.validate(), ConfigError);

    const TDcfParams parsed = TDcfParams::parse_text("p_tar = 0.9405\np_non = 0.0095\np_spoof = 0.05\n");
    CHECK(parsed.p_tar == 0.9405);
    CHECK_THROWS_AS((void)TDcfParams::parse_text("mystery = 1\n"), ConfigError);
}

TEST_CASE("cumulative EER is the sum of the pair") {
    CHECK(cumulative_eer(3.04, 1.26) == doctest::Approx(4.30).epsilon(1e-12));
    CHECK(cumulative_eer(0.0, 0.0) == 0.0);
    // Ordering against a higher-EER pair.
    CHECK(cumulative_eer(3.04, 1.26) < cumulative_eer(6.70, 0.59));
}

TEST_CASE("report emission: csv round trip, ordering, plot series") {
    std::vector<SystemRow> rows = {
        {"system_b", 0.067, 0.155, 0.0059, 0.016},
        {"system_a", 0.0304, 0.087, 0.0126, 0.038},
        {"system_c", 0.0786, 0.183, 0.046, 0.105},
    };
    const std::string csv = emit_report(rows, ReportFormat::kCsv);
    const auto parsed = parse_report_csv(csv);
    REQUIRE(parsed.size() == 3);
    CHECK(parsed[0].system == "system_a");  // lowest cumulative first
    CHECK(parsed[0].eer_la == 0.0304);
    CHECK(parsed[0].tdcf_pa == 0.038);
    for (size_t i = 1; i < parsed.size(); ++i)
        CHECK(parsed[i - 1].cumulative() <= parsed[i].cumulative());

    const std::string text = emit_report(rows, ReportFormat::kText);
    CHECK(text.find("system_a") != std::string::npos);
    CHECK(text.find("cumulative") != std::string::npos);

    const std::string plot = emit_report(rows, ReportFormat::kPlotData);
    CHECK(std::count(plot.begin(), plot.end(), '\n') > 3);
    // One error bar per system.
    size_t deltas = 0, pos = 0;
    while ((pos = plot.find("delta", pos)) != std::string::npos) {
        ++deltas;
        ++pos;
    }
    CHECK(deltas == 1);  // one series holding three entries

    CHECK_THROWS_AS((void)parse_report_format("yaml"), ConfigError);
    CHECK_THROWS_AS((void)emit_report({}, ReportFormat::kText), ContractError);
}

TEST_CASE("score and key files round trip") {
    write_score_file("metrics_scores.tsv", {{"u1", 0.9}, {"u2", 0.2}});
    std::ofstream keys("metrics_keys.tsv");
    keys << "u1\tbonafide\t-\nu2\tspoof\tA01\n";
    keys.close();
    ScoreSet set = load_score_set("metrics_scores.tsv", "metrics_keys.tsv");
    REQUIRE(set.entries.size() == 2);
    CHECK(set.entries[0].score == doctest::Approx(0.9));
    CHECK_FALSE(set.entries[0].spoof);
    CHECK(set.entries[1].spoof);
    CHECK(set.entries[1].attack_id == "A01");

    std::ofstream missing("metrics_keys_missing.tsv");
    missing << "u1\tbonafide\t-\n";
    missing.close();
    CHECK_THROWS_AS((void)load_score_set("metrics_scores.tsv", "metrics_keys_missing.tsv"), DataError);
    std::remove("metrics_scores.tsv");
    std::remove("metrics_keys.tsv");
    std::remove("metrics_keys_missing.tsv");
}
