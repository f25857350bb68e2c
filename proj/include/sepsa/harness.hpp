#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sepsa/data.hpp"

namespace sepsa {

// One cell of the cardinality / bottleneck-width trade-off grid.
struct SweepCell {
    int cardinality = 1;
    int width = 1;
};

// "4x64,8x32" -> cells.
std::vector<SweepCell> parse_sweep_grid(const std::string& grid);

// Trains one model per cell and reports per-subset AUC of the best dev
// scores. CSV: cardinality,width,auc_la,auc_pa.
std::string cardinality_sweep_report(const Manifest& train_manifest, const Manifest& dev_manifest,
                                     const RunConfig& base, const std::vector<SweepCell>& cells,
                                     int epochs_override, uint64_t seed);

// Depth {18,34} x SE {off,on} x spatial dropout {off,on} grid.
// CSV: system,depth,se,spatial_dropout,dev_eer.
std::string ablation_report(const Manifest& train_manifest, const Manifest& dev_manifest,
                            const RunConfig& base, int epochs_override, uint64_t seed);

}  // namespace sepsa
