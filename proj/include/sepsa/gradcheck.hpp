#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sepsa {

struct GradCheckEntry {
    std::string op;
    int cases = 0;
    double max_rel_err = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    double tolerance = 1e-4;
    double step = 1e-5;
    uint64_t seed = 0;
    std::vector<GradCheckEntry> entries;

    bool all_pass() const {
        for (const auto& e : entries)
            if (!e.pass) return false;
        return true;
    }
};

// Central finite-difference verification (64-bit) of every differentiable op
// against its recorded backward pass. Deterministic for a given seed.
GradCheckReport run_grad_checks(uint64_t seed, int cases_per_op = 20);

std::string format_report(const GradCheckReport& report);

}  // namespace sepsa
