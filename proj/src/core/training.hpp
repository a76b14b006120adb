#pragma once

#include <functional>
#include <span>

#include "core/calibnet.hpp"
#include "core/container.hpp"

namespace dpcvqa {

struct TrainConfig {
    double learning_rate = 1e-4;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    uint32_t batch_size = 8;
    uint32_t epochs = 30;
    double lambda_res = 0.05;
    double smooth_l1_beta = 1.0;
    uint64_t seed = 0;

    void validate() const;
};

// --- losses ------------------------------------------------------------------

template <class R>
R smooth_l1(R y_hat, R y, R beta) {
    R x = y_hat - y;
    R ax = std::abs(x);
    if (ax < beta) return R(0.5) * x * x / beta;
    return ax - R(0.5) * beta;
}

// d smooth_l1 / d y_hat at x = y_hat - y
template <class R>
R smooth_l1_grad(R x, R beta) {
    if (std::abs(x) < beta) return x / beta;
    return x > R(0) ? R(1) : R(-1);
}

template <class R>
R residual_penalty(std::span<const R> deltas) {
    if (deltas.empty()) {
        fail(Errc::invalid_argument, "residual penalty of an empty batch");
    }
    R acc = R(0);
    for (R d : deltas) acc += std::abs(d);
    return acc / static_cast<R>(deltas.size());
}

template <class R>
R total_loss(std::span<const R> y_hat, std::span<const R> y,
             std::span<const R> deltas, R lambda_res, R beta) {
    if (y_hat.size() != y.size() || y_hat.size() != deltas.size()) {
        fail(Errc::length_mismatch, "total_loss: batch lengths differ");
    }
    if (y_hat.empty()) fail(Errc::invalid_argument, "total_loss: empty batch");
    R reg = R(0);
    for (size_t i = 0; i < y_hat.size(); ++i) {
        reg += smooth_l1(y_hat[i], y[i], beta);
    }
    reg /= static_cast<R>(y_hat.size());
    return reg + lambda_res * residual_penalty(deltas);
}

// Per-sample objective: smooth L1 plus the residual-magnitude penalty.
template <class R>
R sample_loss_value(double y_hat, double delta, double label, R lambda_res,
                    R beta) {
    return smooth_l1(static_cast<R>(y_hat), static_cast<R>(label), beta) +
           lambda_res * std::abs(static_cast<R>(delta));
}

// --- backward ------------------------------------------------------------------

namespace detail {

template <class R>
void add_scaled_row(R* dst, const R* src, R w, size_t n) {
    for (size_t j = 0; j < n; ++j) dst[j] += w * src[j];
}

}  // namespace detail

// Reverse accumulation of scale * (smooth_l1 + lambda * |Delta|) through the
// forward trace into `grad`. The perception inputs (q_b, u_b, token
// features) are constants: no gradient leaves the calibration branch.
template <class R>
void accumulate_gradients(const Record& rec, const ForwardTrace<R>& tr,
                          const CalibParams<R>& p, double label,
                          double lambda_res, double sl1_beta, double scale,
                          CalibParams<R>& grad) {
    const CalibConfig& cfg = p.cfg;
    if (cfg.mode == Mode::base_only) return;  // no trainable path

    const size_t m_q = cfg.m;
    const size_t d = cfg.d;
    const R sc = static_cast<R>(scale);
    const R beta = static_cast<R>(sl1_beta);
    const R dY =
        sc * smooth_l1_grad(static_cast<R>(tr.y_hat - label), beta);

    Mat<R> d_tmod(m_q, d);

    if (cfg.mode == Mode::residual_calibration) {
        R sign_delta =
            tr.big_delta > R(0) ? R(1) : (tr.big_delta < R(0) ? R(-1) : R(0));
        R d_delta = dY + sc * static_cast<R>(lambda_res) * sign_delta;

        // aggregation: Delta = sum_m a_m delta_m, a = softmax(e_a)
        std::vector<R> d_a(m_q), d_dm(m_q);
        R dot = R(0);
        for (size_t m = 0; m < m_q; ++m) {
            d_a[m] = d_delta * tr.delta_m[m];
            d_dm[m] = d_delta * tr.a[m];
            dot += d_a[m] * tr.a[m];
        }
        const R alpha = static_cast<R>(cfg.alpha);
        for (size_t m = 0; m < m_q; ++m) {
            R de_a = tr.a[m] * (d_a[m] - dot);
            const R* trow = tr.t_mod.row(m);
            detail::add_scaled_row(grad.w_a.data(), trow, de_a, d);
            detail::add_scaled_row(d_tmod.row(m), p.w_a.data(), de_a, d);

            // delta_m = alpha * g_m * s_m
            R dg = d_dm[m] * alpha * tr.s[m];
            R ds = d_dm[m] * alpha * tr.g[m];
            R de_g = dg * tr.g[m] * (R(1) - tr.g[m]);
            R de_s = ds * (R(1) - tr.s[m] * tr.s[m]);
            grad.b_g += de_g;
            grad.b_s += de_s;
            detail::add_scaled_row(grad.w_g.data(), trow, de_g, d);
            detail::add_scaled_row(grad.w_s.data(), trow, de_s, d);
            detail::add_scaled_row(d_tmod.row(m), p.w_g.data(), de_g, d);
            detail::add_scaled_row(d_tmod.row(m), p.w_s.data(), de_s, d);
        }
    } else {
        // direct / score-conditioned: y_hat = sigmoid(w_g . mean_m + b_g)
        R yraw = sigmoid(tr.e_out);
        R de = dY * yraw * (R(1) - yraw);
        grad.b_g += de;
        detail::add_scaled_row(grad.w_g.data(), tr.t_mean.data(), de, d);
        R de_per_m = de / static_cast<R>(m_q);
        for (size_t m = 0; m < m_q; ++m) {
            detail::add_scaled_row(d_tmod.row(m), p.w_g.data(), de_per_m, d);
        }
    }

    // FiLM backward (identity in direct mode)
    Mat<R> d_t(m_q, d);
    if (cfg.mode == Mode::direct_regression) {
        d_t = d_tmod;
    } else {
        std::vector<R> d_gamma(d, R(0)), d_beta(d, R(0));
        for (size_t m = 0; m < m_q; ++m) {
            const R* dtm = d_tmod.row(m);
            const R* trow = tr.t.row(m);
            R* out = d_t.row(m);
            for (size_t j = 0; j < d; ++j) {
                d_gamma[j] += dtm[j] * trow[j];
                d_beta[j] += dtm[j];
                out[j] = dtm[j] * tr.gamma[j];
            }
        }
        for (size_t j = 0; j < d; ++j) {
            grad.w_gamma.at(j, 0) += d_gamma[j] * tr.c_b[0];
            grad.w_gamma.at(j, 1) += d_gamma[j] * tr.c_b[1];
            grad.b_gamma[j] += d_gamma[j];
            grad.w_beta.at(j, 0) += d_beta[j] * tr.c_b[0];
            grad.w_beta.at(j, 1) += d_beta[j] * tr.c_b[1];
            grad.b_beta[j] += d_beta[j];
        }
    }

    // attention backward, head by head
    const size_t n_t = tr.bank.rows;
    const size_t dh = d / cfg.heads;
    Mat<R> d_q(m_q, d), d_k(n_t, d), d_v(n_t, d);
    for (uint32_t h = 0; h < cfg.heads; ++h) {
        Mat<R> d_th = detail::slice_cols(d_t, h * dh, dh);
        Mat<R> qh = detail::slice_cols(tr.qp, h * dh, dh);
        Mat<R> kh = detail::slice_cols(tr.kp, h * dh, dh);
        Mat<R> vh = detail::slice_cols(tr.vp, h * dh, dh);
        const Mat<R>& attn = tr.attn[h];

        Mat<R> d_attn = matmul_nt(d_th, vh);     // M x n_t
        Mat<R> d_vh = matmul_tn(attn, d_th);     // n_t x dh

        Mat<R> d_scores(m_q, n_t);
        const R scale_h = R(1) / std::sqrt(static_cast<R>(dh));
        for (size_t m = 0; m < m_q; ++m) {
            const R* arow = attn.row(m);
            const R* darow = d_attn.row(m);
            R rowdot = R(0);
            for (size_t t = 0; t < n_t; ++t) rowdot += darow[t] * arow[t];
            R* srow = d_scores.row(m);
            for (size_t t = 0; t < n_t; ++t) {
                srow[t] = arow[t] * (darow[t] - rowdot) * scale_h;
            }
        }
        Mat<R> d_qh = matmul(d_scores, kh);      // M x dh
        Mat<R> d_kh = matmul_tn(d_scores, qh);   // n_t x dh
        detail::add_cols(d_q, d_qh, h * dh);
        detail::add_cols(d_k, d_kh, h * dh);
        detail::add_cols(d_v, d_vh, h * dh);
    }

    // query/key/value projections
    {
        Mat<R> d_qc = matmul_nt(d_q, p.w_q);
        for (size_t i = 0; i < d_qc.v.size(); ++i) grad.q_c.v[i] += d_qc.v[i];
        Mat<R> g_wq = matmul_tn(p.q_c, d_q);
        for (size_t i = 0; i < g_wq.v.size(); ++i) grad.w_q.v[i] += g_wq.v[i];
        Mat<R> g_wk = matmul_tn(tr.bank, d_k);
        for (size_t i = 0; i < g_wk.v.size(); ++i) grad.w_k.v[i] += g_wk.v[i];
        Mat<R> g_wv = matmul_tn(tr.bank, d_v);
        for (size_t i = 0; i < g_wv.v.size(); ++i) grad.w_v.v[i] += g_wv.v[i];
    }

    // token-bank backward into the two projection branches
    Mat<R> d_bank = matmul_nt(d_k, p.w_k);
    {
        Mat<R> d_bank_v = matmul_nt(d_v, p.w_v);
        for (size_t i = 0; i < d_bank.v.size(); ++i) {
            d_bank.v[i] += d_bank_v.v[i];
        }
    }
    for (size_t n = 0; n < rec.n_vis; ++n) {
        const R* drow = d_bank.row(n);
        const float* x = rec.h_vis.data() + n * cfg.d_m;
        for (size_t j = 0; j < d; ++j) {
            R dj = drow[j];
            if (dj == R(0)) continue;
            grad.b_pvis[j] += dj;
            R* wrow = grad.w_pvis.row(j);
            for (size_t i = 0; i < cfg.d_m; ++i) {
                wrow[i] += dj * static_cast<R>(x[i]);
            }
        }
    }
    for (size_t n = 0; n < rec.n_aux; ++n) {
        const R* drow = d_bank.row(rec.n_vis + n);
        const float* x = rec.h_aux.data() + n * cfg.d_a;
        for (size_t j = 0; j < d; ++j) {
            R dj = drow[j];
            if (dj == R(0)) continue;
            grad.b_paux[j] += dj;
            R* wrow = grad.w_paux.row(j);
            for (size_t i = 0; i < cfg.d_a; ++i) {
                wrow[i] += dj * static_cast<R>(x[i]);
            }
        }
    }
}

// Raises a numeric error naming the first tensor holding a non-finite value.
template <class R>
void check_finite_gradients(CalibParams<R>& grad) {
    for (const auto& t : grad.tensors()) {
        for (size_t i = 0; i < t.size; ++i) {
            if (!std::isfinite(static_cast<double>(t.data[i]))) {
                fail(Errc::numeric, "non-finite gradient in tensor " +
                                        std::string(t.name) + " at index " +
                                        std::to_string(i));
            }
        }
    }
}

// --- AdamW ------------------------------------------------------------------

template <class R>
struct AdamWState {
    CalibParams<R> m;
    CalibParams<R> v;
    uint64_t step = 0;

    static AdamWState init(const CalibConfig& cfg) {
        return {CalibParams<R>::zeros(cfg), CalibParams<R>::zeros(cfg), 0};
    }
};

template <class R>
void adamw_step(CalibParams<R>& params, const CalibParams<R>& grads,
                AdamWState<R>& st, const TrainConfig& cfg) {
    st.step += 1;
    const R lr = static_cast<R>(cfg.learning_rate);
    const R wd = static_cast<R>(cfg.weight_decay);
    const R b1 = static_cast<R>(cfg.beta1);
    const R b2 = static_cast<R>(cfg.beta2);
    const R eps = static_cast<R>(cfg.epsilon);
    const R bc1 = static_cast<R>(
        1.0 - std::pow(cfg.beta1, static_cast<double>(st.step)));
    const R bc2 = static_cast<R>(
        1.0 - std::pow(cfg.beta2, static_cast<double>(st.step)));

    auto tp = params.tensors();
    auto tg = grads.tensors();
    auto tm = st.m.tensors();
    auto tv = st.v.tensors();
    for (size_t t = 0; t < tp.size(); ++t) {
        for (size_t i = 0; i < tp[t].size; ++i) {
            R& th = tp[t].data[i];
            R g = tg[t].data[i];
            th -= lr * wd * th;  // decoupled decay
            R& m = tm[t].data[i];
            R& v = tv[t].data[i];
            m = b1 * m + (R(1) - b1) * g;
            v = b2 * v + (R(1) - b2) * g * g;
            th -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
        }
    }
}

// --- finite differences ------------------------------------------------------

double central_diff(const std::function<double(double)>& f, double x, double h);

struct FdWorst {
    std::string tensor;
    size_t index = 0;
    double analytic = 0;
    double numeric = 0;
    double rel_err = 0;
};

struct FdReport {
    double max_rel_err = 0;
    std::vector<FdWorst> tensors;  // worst coordinate per tensor
};

// Compares the analytic gradient of the per-sample loss against central
// differences for every parameter coordinate, in binary64. `corrupt` doubles
// one nonzero analytic coordinate first (mutation sanity).
FdReport fd_check(const Record& rec, const VerbalizerSet& vset,
                  CalibParams<double> params, double label,
                  const TrainConfig& cfg, double h, bool corrupt = false);

struct FdSweepEntry {
    std::string config;
    double max_rel_err = 0;
};

struct FdSweepResult {
    double max_rel_err = 0;
    std::vector<FdSweepEntry> entries;
    std::string worst_config;
    std::vector<FdWorst> worst_tensors;  // per-tensor detail of the worst run
};

// Standard verification sweep: >= 20 random configurations drawn from
// d in {4,8,16}, M in {1,2,4}, N in {1,3,5}, N_a in {0,2}, each checked in
// every variant mode at h = 1e-5 in binary64.
FdSweepResult fd_sweep(uint64_t seed, bool corrupt = false);
std::string fd_sweep_report(const FdSweepResult& r);

// --- training loop -------------------------------------------------------------

struct EpochStats {
    uint32_t epoch = 0;
    double train_loss = 0;
    double mean_abs_delta = 0;
    double val_srcc = 0;
    double val_plcc = 0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

struct TrainResult {
    CalibParams<float> best_params;
    uint32_t best_epoch = 0;
    double best_val_srcc = 0;
    uint64_t steps = 0;
    std::vector<EpochStats> history;
};

// Seeded-shuffle epoch loop with per-batch AdamW steps and best-checkpoint
// selection by validation SRCC (ties keep the earlier epoch). Deterministic
// given (container, config, initial params).
TrainResult train(const Container& data,
                  const std::vector<std::string>& train_ids,
                  const std::vector<std::string>& val_ids,
                  CalibParams<float> params, const TrainConfig& cfg,
                  const VerbalizerSet& vset, const EpochCallback& cb = {});

}  // namespace dpcvqa
