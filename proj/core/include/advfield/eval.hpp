#pragma once

#include <optional>

#include "advfield/metrics.hpp"
#include "advfield/trainer.hpp"

namespace advfield {

// Columns to evaluate and the attack settings they share.
struct RobustnessConfig {
    bool random_bias = true;
    bool adversarial_bias = true;
    bool random_morph = false;
    bool adversarial_morph = false;
    int trials = 5; // random draws per sample
    AttackConfig attack{};
    std::uint64_t seed = 0;
};

struct EvalColumn {
    std::string name;
    std::vector<double> values; // one per sample
};

// Per-sample dice table; aggregates are always recomputed from the rows.
struct EvalReport {
    std::vector<std::string> ids;
    std::vector<EvalColumn> columns;
    std::string config_fingerprint;

    const EvalColumn& column(const std::string& name) const;
    double mean(const std::string& name) const;
    double stddev(const std::string& name) const;
};

// Foreground dice per sample: clean, mean over `trials` random bias fields,
// under the bias attack, and the morph analogues when requested. Labels of
// geometrically attacked samples are warped alongside the image. The network
// is never mutated.
EvalReport evaluate_robustness(const SegNet& net, std::span<const Sample> test,
                               const RobustnessConfig& cfg);

void write_report_csv(const EvalReport& report, const std::filesystem::path& path);
void write_report_summary(const EvalReport& report, const std::filesystem::path& path);

// Mean foreground dice over test samples corrupted by random bias fields;
// the corruption stream depends only on (seed, sample, trial), so different
// networks are compared on identical corruptions.
double corrupted_dice(const SegNet& net, std::span<const Sample> test, double alpha,
                      std::size_t grid_k, int trials, std::uint64_t seed);

// --- ablation harness ---

struct AblationCell {
    std::string name;
    TrainConfig cfg;
};

struct AblationRow {
    std::string cell;
    std::uint64_t seed = 0;
    double dice_clean = 0.0;
    double dice_corrupted = 0.0;
    double runtime_seconds = 0.0;
    std::string error; // empty on success
};

struct AblationCorruption {
    double alpha = 0.3;
    std::size_t grid_k = 4;
    int trials = 5;
    std::uint64_t seed = 0;
};

// Trains every cell and scores its best-validation network on the test set,
// clean and under identical random bias corruption. A failing cell reports
// its error and the remaining cells still run.
std::vector<AblationRow> run_ablation(std::span<const AblationCell> cells,
                                      std::span<const Sample> labelled,
                                      std::span<const Sample> unlabelled,
                                      std::span<const Sample> validation,
                                      std::span<const Sample> test,
                                      const AblationCorruption& corruption);

// table.csv holds the deterministic columns; runtimes go to the summary.
void write_ablation_csv(std::span<const AblationRow> rows, const std::filesystem::path& path);
void write_ablation_summary(std::span<const AblationRow> rows,
                            const std::filesystem::path& path);

} // namespace advfield
