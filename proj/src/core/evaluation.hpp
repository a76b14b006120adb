#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "core/calibnet.hpp"
#include "core/container.hpp"
#include "core/training.hpp"

namespace dpcvqa {

// --- correlation metrics -----------------------------------------------------

// 1-based ranks with ties averaged.
std::vector<double> fractional_ranks(std::span<const double> v);

// Spearman rank-order correlation: Pearson over fractional ranks.
double srcc(std::span<const double> pred, std::span<const double> truth);

// Pearson linear correlation on raw values; no nonlinear fitting.
double plcc(std::span<const double> pred, std::span<const double> truth);

// --- split protocol ------------------------------------------------------------

struct FoldSplit {
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
    std::vector<std::string> test_ids;
};

struct SplitPlan {
    static constexpr uint32_t kFoldCount = 5;
    uint64_t seed = 0;
    std::array<FoldSplit, kFoldCount> folds;
};

// 5-fold few-shot protocol: a seeded shuffle is cut into five contiguous
// folds; fold i trains on its own 20% while the remaining ids are reshuffled
// (fold-derived seed) into round(0.1 n) validation ids and the rest testing.
SplitPlan make_folds(std::vector<std::string> ids, uint64_t seed);

// Sub-seed scheme shared by the CLI, C API and protocol runner: everything
// derives from one user seed via labeled hashing.
inline uint64_t protocol_split_seed(uint64_t user_seed) {
    return derive_seed(user_seed, "split");
}
inline uint64_t protocol_init_seed(uint64_t user_seed, uint32_t fold) {
    return derive_seed(user_seed, "init", fold);
}
inline uint64_t protocol_train_seed(uint64_t user_seed, uint32_t fold) {
    return derive_seed(user_seed, "train", fold);
}

// --- evaluation ------------------------------------------------------------------

struct SampleRow {
    std::string id;
    double q_b = 0;
    double u_b = 0;
    double delta = 0;
    double y_hat = 0;
    double y = 0;  // normalized MOS; meaningless when !labeled
    bool labeled = false;
};

struct MetricReport {
    double srcc = 0;
    double plcc = 0;
    size_t n = 0;
    double mean_abs_delta = 0;
    std::vector<SampleRow> rows;
};

// Scores every record, labeled or not.
std::vector<SampleRow> score_rows(const CalibParams<float>& params,
                                  const Container& data,
                                  const VerbalizerSet& vset);

MetricReport evaluate(const CalibParams<float>& params, const Container& data,
                      std::span<const std::string> ids,
                      const VerbalizerSet& vset);

// --- residual diagnostics ---------------------------------------------------------

struct DecileBin {
    double center = 0;    // mean q_b inside the decile
    double mean_err = 0;  // mean (y - q_b)
    size_t n = 0;
};

struct AnalyzeResult {
    std::vector<SampleRow> rows;
    std::array<uint64_t, 20> hist{};  // y - q_b binned uniformly over [-1, 1]
    std::vector<DecileBin> deciles;   // base-score dependency of the error
};

AnalyzeResult analyze(const CalibParams<float>& params, const Container& data,
                      std::span<const std::string> ids,
                      const VerbalizerSet& vset);

// --- full protocol -----------------------------------------------------------------

struct ProtocolFold {
    uint32_t fold = 0;
    MetricReport report;
    uint32_t best_epoch = 0;
    double best_val_srcc = 0;
};

struct ProtocolResult {
    std::vector<ProtocolFold> folds;
    double mean_srcc = 0;
    double mean_plcc = 0;
};

// Trains (when the mode is trainable) and evaluates all five folds.
ProtocolResult run_protocol(const Container& data, const CalibConfig& model_cfg,
                            const TrainConfig& train_cfg, uint64_t user_seed,
                            const VerbalizerSet& vset,
                            const EpochCallback& cb = {});

// --- text emission -------------------------------------------------------------------

std::string score_csv(std::span<const SampleRow> rows);
std::string analyze_samples_csv(std::span<const SampleRow> rows);
std::string analyze_hist_csv(const AnalyzeResult& r);
std::string analyze_deciles_csv(const AnalyzeResult& r);
std::string protocol_tsv(const ProtocolResult& r);

}  // namespace dpcvqa
