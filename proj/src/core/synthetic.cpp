#include <algorithm>
#include <cmath>

#include "core/container.hpp"
#include "core/rng.hpp"

namespace dpcvqa {

void SyntheticConfig::validate() const {
    if (record_count < 1) fail(Errc::invalid_argument, "record_count must be >= 1");
    if (k < 2) fail(Errc::invalid_argument, "K must be >= 2");
    if (d_m < 1) fail(Errc::invalid_argument, "d_m must be >= 1");
    if (n_vis < 1) fail(Errc::invalid_argument, "N must be >= 1");
    if (n_aux > 0 && d_a < 1) {
        fail(Errc::invalid_argument, "N_a > 0 requires d_a >= 1");
    }
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
        fail(Errc::invalid_argument, "noise_sigma must be finite and >= 0");
    }
}

Container generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, "synthetic"));
    VerbalizerSet vset = default_verbalizers(cfg.k);

    // Seed-derived unit direction in visual-feature space; its projection of
    // the mean token drives the learnable part of the residual.
    std::vector<double> w_star(cfg.d_m);
    double norm_sq = 0.0;
    for (double& w : w_star) {
        w = rng.normal();
        norm_sq += w * w;
    }
    double inv_norm = 1.0 / std::sqrt(norm_sq);
    for (double& w : w_star) w *= inv_norm;

    // Coarse quality levels. Within a level the base score is nearly tied,
    // so the within-level ordering of the target is carried by the token
    // signal the calibration branch can learn.
    std::vector<uint32_t> levels = {0, (cfg.k - 1) / 2, cfg.k - 1};
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

    Container c;
    c.header.k = cfg.k;
    c.header.d_m = cfg.d_m;
    c.header.d_a = cfg.d_a;
    c.header.mos_lo = 0.0f;
    c.header.mos_hi = 1.0f;

    char idbuf[32];
    for (uint64_t i = 0; i < cfg.record_count; ++i) {
        Record r;
        std::snprintf(idbuf, sizeof(idbuf), "vid_%06llu",
                      static_cast<unsigned long long>(i));
        r.id = idbuf;
        r.n_vis = cfg.n_vis;
        r.n_aux = cfg.n_aux;

        uint32_t level = levels[rng.below(levels.size())];
        r.logits.resize(cfg.k);
        for (uint32_t j = 0; j < cfg.k; ++j) {
            r.logits[j] = static_cast<float>(0.1 * rng.normal());
        }
        r.logits[level] += static_cast<float>(rng.uniform(4.0, 8.0));

        r.h_vis.resize(static_cast<size_t>(cfg.n_vis) * cfg.d_m);
        for (float& x : r.h_vis) x = static_cast<float>(rng.normal());
        r.h_aux.resize(static_cast<size_t>(cfg.n_aux) * cfg.d_a);
        for (float& x : r.h_aux) x = static_cast<float>(rng.normal());

        // Base score as the evaluator will see it, from the stored floats.
        BaseJudgment j = judge(r, vset);

        double token_signal = 0.0;
        for (uint32_t col = 0; col < cfg.d_m; ++col) {
            double mean = 0.0;
            for (uint32_t row = 0; row < cfg.n_vis; ++row) {
                mean += r.h_vis[static_cast<size_t>(row) * cfg.d_m + col];
            }
            token_signal += w_star[col] * (mean / cfg.n_vis);
        }

        double y = j.q_b + planted_residual(j.q_b, token_signal) +
                   cfg.noise_sigma * rng.normal();
        r.mos_raw = static_cast<float>(std::clamp(y, 0.0, 1.0));

        c.records.push_back(std::move(r));
    }
    c.header.record_count = c.records.size();
    return c;
}

}  // namespace dpcvqa
