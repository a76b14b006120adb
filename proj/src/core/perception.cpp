#include "core/perception.hpp"

#include <algorithm>

namespace dpcvqa {

void VerbalizerSet::validate() const {
    if (anchors.size() < 2) {
        fail(Errc::invalid_argument, "verbalizer set needs K >= 2, got K=" +
                                         std::to_string(anchors.size()));
    }
    if (labels.size() != anchors.size()) {
        fail(Errc::length_mismatch,
             "verbalizer labels/anchors length mismatch: " +
                 std::to_string(labels.size()) + " vs " +
                 std::to_string(anchors.size()));
    }
    double prev = -1.0;
    for (double c : anchors) {
        if (!std::isfinite(c) || c < 0.0 || c > 1.0) {
            fail(Errc::out_of_range, "anchor outside [0,1]");
        }
        if (c <= prev) {
            fail(Errc::invalid_argument, "anchors must be strictly increasing");
        }
        prev = c;
    }
}

VerbalizerSet default_verbalizers(uint32_t k) {
    VerbalizerSet v;
    if (k == 5) {
        v.labels = {"bad", "poor", "fair", "good", "excellent"};
    } else {
        for (uint32_t i = 1; i <= k; ++i) v.labels.push_back("level_" + std::to_string(i));
    }
    for (uint32_t i = 0; i < k; ++i) {
        v.anchors.push_back(static_cast<double>(i) / static_cast<double>(k - 1));
    }
    v.validate();
    return v;
}

namespace {

template <class S>
std::vector<double> softmax_impl(std::span<const S> z, std::string_view ctx) {
    if (z.size() < 2) {
        fail(Errc::invalid_argument, "verbalizer distribution needs K >= 2");
    }
    double zmax = -std::numeric_limits<double>::infinity();
    for (S x : z) {
        if (!std::isfinite(static_cast<double>(x))) {
            std::string msg = "non-finite logit";
            if (!ctx.empty()) msg += " in record '" + std::string(ctx) + "'";
            fail(Errc::not_finite, msg);
        }
        zmax = std::max(zmax, static_cast<double>(x));
    }
    std::vector<double> p(z.size());
    double sum = 0.0;
    for (size_t k = 0; k < z.size(); ++k) {
        p[k] = std::exp(static_cast<double>(z[k]) - zmax);
        sum += p[k];
    }
    for (double& x : p) x /= sum;
    return p;
}

}  // namespace

std::vector<double> verbalizer_distribution(std::span<const float> z,
                                            std::string_view ctx) {
    return softmax_impl(z, ctx);
}

std::vector<double> verbalizer_distribution(std::span<const double> z,
                                            std::string_view ctx) {
    return softmax_impl(z, ctx);
}

double base_score(std::span<const double> p, std::span<const double> anchors) {
    if (p.size() != anchors.size()) {
        fail(Errc::length_mismatch,
             "base_score: distribution length " + std::to_string(p.size()) +
                 " vs " + std::to_string(anchors.size()) + " anchors");
    }
    double q = 0.0;
    for (size_t k = 0; k < p.size(); ++k) q += p[k] * anchors[k];
    return q;
}

double confidence(std::span<const double> p) {
    if (p.size() < 2) {
        fail(Errc::invalid_argument, "confidence undefined for K < 2");
    }
    double h = 0.0;
    for (double pk : p) {
        if (pk > 0.0) h -= pk * std::log(pk);
    }
    double u = 1.0 - h / std::log(static_cast<double>(p.size()));
    return std::clamp(u, 0.0, 1.0);
}

BaseJudgment judge(const Record& record, const VerbalizerSet& vset) {
    vset.validate();
    if (record.logits.size() != vset.size()) {
        fail(Errc::length_mismatch,
             "record '" + record.id + "' has " +
                 std::to_string(record.logits.size()) + " logits, verbalizer K=" +
                 std::to_string(vset.size()));
    }
    BaseJudgment j;
    j.p = verbalizer_distribution(std::span<const float>(record.logits), record.id);
    j.q_b = base_score(j.p, vset.anchors);
    j.u_b = confidence(j.p);
    return j;
}

}  // namespace dpcvqa
