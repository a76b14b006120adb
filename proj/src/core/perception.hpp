#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "core/error.hpp"

namespace dpcvqa {

// Ordered quality words with their scalar anchors.
struct VerbalizerSet {
    std::vector<std::string> labels;
    std::vector<double> anchors;  // strictly increasing, inside [0, 1]

    uint32_t size() const { return static_cast<uint32_t>(anchors.size()); }
    void validate() const;
};

// Default set: equally spaced anchors c_k = (k-1)/(K-1); the canonical
// five-word ladder when K = 5, generic level names otherwise.
VerbalizerSet default_verbalizers(uint32_t k);

// Per-video frozen-model evidence. Feature payloads are binary32, matching
// the container format; all math widens on the fly.
struct Record {
    std::string id;
    uint32_t n_vis = 0;
    uint32_t n_aux = 0;
    float mos_raw = std::numeric_limits<float>::quiet_NaN();  // NaN = unlabeled
    std::vector<float> logits;  // K
    std::vector<float> h_vis;   // n_vis * d_m, row-major
    std::vector<float> h_aux;   // n_aux * d_a, row-major

    bool labeled() const { return !std::isnan(mos_raw); }
};

struct BaseJudgment {
    std::vector<double> p;  // verbalizer distribution, sums to 1
    double q_b = 0.0;       // anchor expectation
    double u_b = 0.0;       // 1 - normalized entropy
};

// Restricted softmax over the verbalizer logits, stabilized by max
// subtraction. `ctx` names the video in error messages when available.
std::vector<double> verbalizer_distribution(std::span<const float> z,
                                            std::string_view ctx = {});
std::vector<double> verbalizer_distribution(std::span<const double> z,
                                            std::string_view ctx = {});

// Expectation of the distribution over the anchors.
double base_score(std::span<const double> p, std::span<const double> anchors);

// 1 - H(p)/log K, natural log, 0*log 0 = 0.
double confidence(std::span<const double> p);

// Distribution, base score and confidence in one pass. Pure.
BaseJudgment judge(const Record& record, const VerbalizerSet& vset);

}  // namespace dpcvqa
