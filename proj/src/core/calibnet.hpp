#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "core/mat.hpp"
#include "core/perception.hpp"
#include "core/rng.hpp"

namespace dpcvqa {

enum class Mode : uint32_t {
    base_only = 0,
    direct_regression = 1,
    score_conditioned = 2,
    residual_calibration = 3,
};

const char* mode_name(Mode m);
Mode mode_from_name(std::string_view name);

struct CalibConfig {
    uint32_t d = 2048;  // shared latent dimension
    uint32_t d_m = 0;   // visual token dimension
    uint32_t d_a = 0;   // aux token dimension
    uint32_t m = 8;     // calibration queries
    uint32_t k = 5;     // verbalizer count
    uint32_t heads = 1;
    double alpha = 0.2;  // residual bound
    Mode mode = Mode::residual_calibration;

    void validate() const;
};

template <class R>
struct TensorRef {
    const char* name;
    R* data;
    size_t size;
};

// All trainable tensors of the calibration branch. Field order here is the
// checkpoint tensor order.
template <class R>
struct CalibParams {
    CalibConfig cfg;

    Mat<R> w_pvis;           // d x d_m
    std::vector<R> b_pvis;   // d
    Mat<R> w_paux;           // d x d_a
    std::vector<R> b_paux;   // d
    Mat<R> q_c;              // M x d
    Mat<R> w_q;              // d x d
    Mat<R> w_k;              // d x d
    Mat<R> w_v;              // d x d
    Mat<R> w_gamma;          // d x 2
    std::vector<R> b_gamma;  // d
    Mat<R> w_beta;           // d x 2
    std::vector<R> b_beta;   // d
    std::vector<R> w_g;      // d, magnitude head
    R b_g = R(0);
    std::vector<R> w_s;      // d, direction head
    R b_s = R(0);
    std::vector<R> w_a;      // d, importance head

    static CalibParams zeros(const CalibConfig& cfg);
    std::vector<TensorRef<R>> tensors();
    std::vector<TensorRef<const R>> tensors() const;
    size_t parameter_count() const;

    template <class R2>
    CalibParams<R2> cast() const {
        CalibParams<R2> out = CalibParams<R2>::zeros(cfg);
        auto src = tensors();
        auto dst = out.tensors();
        for (size_t t = 0; t < src.size(); ++t) {
            for (size_t i = 0; i < src[t].size; ++i) {
                dst[t].data[i] = static_cast<R2>(src[t].data[i]);
            }
        }
        return out;
    }
};

// Closed-form count implied by the architecture; audited against the actual
// tensor storage in tests.
size_t expected_parameter_count(uint32_t d, uint32_t d_m, uint32_t d_a,
                                uint32_t m);

// Calibrated start: FiLM is the identity and both heads are zero, so the
// initial prediction is exactly the base score.
template <class R>
CalibParams<R> init_params(const CalibConfig& cfg, uint64_t seed);

struct PerToken {
    double a = 0;      // importance weight
    double g = 0;      // magnitude gate
    double s = 0;      // direction
    double delta = 0;  // bounded proposal
};

struct Prediction {
    double q_b = 0;
    double u_b = 0;
    double delta = 0;  // aggregated residual; 0 outside residual mode
    double y_hat = 0;
    std::vector<PerToken> per_token;  // M entries in residual mode
};

// Every activation the backward pass consumes.
template <class R>
struct ForwardTrace {
    Mat<R> proj_vis;            // N x d
    Mat<R> proj_aux;            // N_a x d
    Mat<R> bank;                // (N+N_a) x d
    Mat<R> qp, kp, vp;          // projected queries/keys/values
    std::vector<Mat<R>> attn;   // per head: M x (N+N_a), rows sum to 1
    Mat<R> t;                   // M x d, attended tokens
    R c_b[2] = {R(0), R(0)};    // [q_b, u_b]
    std::vector<R> gamma, beta; // d; empty when FiLM is disabled
    Mat<R> t_mod;               // M x d, modulated tokens
    std::vector<R> e_g, e_s, e_a, g, s, delta_m, a;  // M
    std::vector<R> t_mean;      // d; direct/score-conditioned head input
    R e_out = R(0);             // direct/score-conditioned pre-activation
    R big_delta = R(0);
    double y_hat = 0;
};

// --- stand-alone stages ----------------------------------------------------

// rows x in_dim input (binary32 payload), affine map x W^T + b per row.
template <class R>
Mat<R> project_rows(std::span<const float> data, size_t rows, size_t in_dim,
                    const Mat<R>& w, const std::vector<R>& b);

template <class R>
Mat<R> build_token_bank(const Mat<R>& proj_vis, const Mat<R>& proj_aux);

template <class R>
struct AttnResult {
    Mat<R> qp, kp, vp;
    std::vector<Mat<R>> attn;
    Mat<R> t;
};

// Scaled dot-product cross-attention of the calibration queries over the
// token bank. Head slices of width d/heads attend independently; the scale
// is 1/sqrt(head width).
template <class R>
AttnResult<R> cross_attend(const Mat<R>& q_c, const Mat<R>& bank,
                           const Mat<R>& w_q, const Mat<R>& w_k,
                           const Mat<R>& w_v, uint32_t heads);

template <class R>
void film_params(const Mat<R>& w_gamma, const std::vector<R>& b_gamma,
                 const Mat<R>& w_beta, const std::vector<R>& b_beta, R q_b,
                 R u_b, std::vector<R>& gamma, std::vector<R>& beta);

template <class R>
Mat<R> film_modulate(const Mat<R>& t, const std::vector<R>& gamma,
                     const std::vector<R>& beta);

template <class R>
void residual_proposals(const Mat<R>& t_mod, const std::vector<R>& w_g, R b_g,
                        const std::vector<R>& w_s, R b_s, R alpha,
                        std::vector<R>& e_g, std::vector<R>& e_s,
                        std::vector<R>& g, std::vector<R>& s,
                        std::vector<R>& delta_m);

template <class R>
void aggregate_residual(const Mat<R>& t_mod, const std::vector<R>& delta_m,
                        const std::vector<R>& w_a, std::vector<R>& e_a,
                        std::vector<R>& a, R& big_delta);

// Full forward pass. `trace` is filled when non-null. Pure given immutable
// params; safe to call concurrently over a shared parameter snapshot.
template <class R>
Prediction forward(const Record& record, const BaseJudgment& judgment,
                   const CalibParams<R>& params,
                   ForwardTrace<R>* trace = nullptr);

// --- checkpoint file ---------------------------------------------------------
//
// magic "DPCCKPT1" | u32 d | u32 d_m | u32 d_a | u32 M | u32 K | f32 alpha |
// u32 mode | u64 step | f32 val_srcc | tensors, binary32 little-endian, in
// CalibParams field order.

struct CheckpointMeta {
    uint64_t step = 0;
    float val_srcc = 0.0f;
};

void save_checkpoint(const std::string& path, const CalibParams<float>& params,
                     const CheckpointMeta& meta);
std::pair<CalibParams<float>, CheckpointMeta> load_checkpoint(
    const std::string& path);

// --- inline math -------------------------------------------------------------

template <class R>
inline R sigmoid(R x) {
    return x >= R(0) ? R(1) / (R(1) + std::exp(-x))
                     : R(1) - R(1) / (R(1) + std::exp(x));
}

template <class R>
Mat<R> project_rows(std::span<const float> data, size_t rows, size_t in_dim,
                    const Mat<R>& w, const std::vector<R>& b) {
    if (data.size() != rows * in_dim) {
        fail(Errc::shape_mismatch, "project_rows: payload size mismatch");
    }
    if (w.cols != in_dim || w.rows != b.size()) {
        fail(Errc::shape_mismatch, "project_rows: weight dims mismatch");
    }
    size_t d = w.rows;
    Mat<R> out(rows, d);
    for (size_t n = 0; n < rows; ++n) {
        const float* x = data.data() + n * in_dim;
        R* y = out.row(n);
        for (size_t j = 0; j < d; ++j) {
            R acc = b[j];
            const R* wrow = w.row(j);
            for (size_t i = 0; i < in_dim; ++i) {
                acc += wrow[i] * static_cast<R>(x[i]);
            }
            y[j] = acc;
        }
    }
    return out;
}

template <class R>
Mat<R> build_token_bank(const Mat<R>& proj_vis, const Mat<R>& proj_aux) {
    if (proj_aux.rows > 0 && proj_aux.cols != proj_vis.cols) {
        fail(Errc::shape_mismatch, "token bank: branch dims differ");
    }
    Mat<R> bank(proj_vis.rows + proj_aux.rows, proj_vis.cols);
    std::copy(proj_vis.v.begin(), proj_vis.v.end(), bank.v.begin());
    std::copy(proj_aux.v.begin(), proj_aux.v.end(),
              bank.v.begin() + static_cast<ptrdiff_t>(proj_vis.v.size()));
    return bank;
}

namespace detail {

// softmax over a contiguous row, max-stabilized
template <class R>
void softmax_row(R* x, size_t n) {
    R mx = x[0];
    for (size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    R sum = R(0);
    for (size_t i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] - mx);
        sum += x[i];
    }
    for (size_t i = 0; i < n; ++i) x[i] /= sum;
}

template <class R>
Mat<R> slice_cols(const Mat<R>& a, size_t c0, size_t width) {
    Mat<R> out(a.rows, width);
    for (size_t i = 0; i < a.rows; ++i) {
        const R* src = a.row(i) + c0;
        std::copy(src, src + width, out.row(i));
    }
    return out;
}

template <class R>
void add_cols(Mat<R>& dst, const Mat<R>& part, size_t c0) {
    for (size_t i = 0; i < dst.rows; ++i) {
        R* d = dst.row(i) + c0;
        const R* s = part.row(i);
        for (size_t j = 0; j < part.cols; ++j) d[j] += s[j];
    }
}

}  // namespace detail

template <class R>
AttnResult<R> cross_attend(const Mat<R>& q_c, const Mat<R>& bank,
                           const Mat<R>& w_q, const Mat<R>& w_k,
                           const Mat<R>& w_v, uint32_t heads) {
    if (bank.rows == 0) {
        fail(Errc::invalid_argument, "cross_attend: empty token bank");
    }
    size_t d = q_c.cols;
    if (bank.cols != d || w_q.rows != d || w_q.cols != d || w_k.rows != d ||
        w_k.cols != d || w_v.rows != d || w_v.cols != d) {
        fail(Errc::shape_mismatch, "cross_attend: dims inconsistent");
    }
    if (heads == 0 || d % heads != 0) {
        fail(Errc::invalid_argument, "cross_attend: heads must divide d");
    }
    AttnResult<R> r;
    r.qp = matmul(q_c, w_q);
    r.kp = matmul(bank, w_k);
    r.vp = matmul(bank, w_v);
    size_t dh = d / heads;
    R scale = R(1) / std::sqrt(static_cast<R>(dh));
    r.t = Mat<R>(q_c.rows, d);
    r.attn.reserve(heads);
    for (uint32_t h = 0; h < heads; ++h) {
        Mat<R> qh = detail::slice_cols(r.qp, h * dh, dh);
        Mat<R> kh = detail::slice_cols(r.kp, h * dh, dh);
        Mat<R> vh = detail::slice_cols(r.vp, h * dh, dh);
        Mat<R> scores = matmul_nt(qh, kh);
        for (R& x : scores.v) x *= scale;
        for (size_t i = 0; i < scores.rows; ++i) {
            detail::softmax_row(scores.row(i), scores.cols);
        }
        Mat<R> th = matmul(scores, vh);
        detail::add_cols(r.t, th, h * dh);
        r.attn.push_back(std::move(scores));
    }
    return r;
}

template <class R>
void film_params(const Mat<R>& w_gamma, const std::vector<R>& b_gamma,
                 const Mat<R>& w_beta, const std::vector<R>& b_beta, R q_b,
                 R u_b, std::vector<R>& gamma, std::vector<R>& beta) {
    size_t d = b_gamma.size();
    if (w_gamma.rows != d || w_gamma.cols != 2 || w_beta.rows != d ||
        w_beta.cols != 2 || b_beta.size() != d) {
        fail(Errc::shape_mismatch, "film_params: dims inconsistent");
    }
    gamma.resize(d);
    beta.resize(d);
    for (size_t j = 0; j < d; ++j) {
        gamma[j] = w_gamma.at(j, 0) * q_b + w_gamma.at(j, 1) * u_b + b_gamma[j];
        beta[j] = w_beta.at(j, 0) * q_b + w_beta.at(j, 1) * u_b + b_beta[j];
    }
}

template <class R>
Mat<R> film_modulate(const Mat<R>& t, const std::vector<R>& gamma,
                     const std::vector<R>& beta) {
    if (t.cols != gamma.size() || t.cols != beta.size()) {
        fail(Errc::shape_mismatch, "film_modulate: dims inconsistent");
    }
    Mat<R> out(t.rows, t.cols);
    for (size_t m = 0; m < t.rows; ++m) {
        const R* src = t.row(m);
        R* dst = out.row(m);
        for (size_t j = 0; j < t.cols; ++j) {
            dst[j] = gamma[j] * src[j] + beta[j];
        }
    }
    return out;
}

template <class R>
void residual_proposals(const Mat<R>& t_mod, const std::vector<R>& w_g, R b_g,
                        const std::vector<R>& w_s, R b_s, R alpha,
                        std::vector<R>& e_g, std::vector<R>& e_s,
                        std::vector<R>& g, std::vector<R>& s,
                        std::vector<R>& delta_m) {
    if (!(alpha > R(0))) fail(Errc::invalid_argument, "alpha must be > 0");
    size_t m = t_mod.rows;
    e_g.resize(m);
    e_s.resize(m);
    g.resize(m);
    s.resize(m);
    delta_m.resize(m);
    for (size_t i = 0; i < m; ++i) {
        const R* row = t_mod.row(i);
        R ag = b_g, as = b_s;
        for (size_t j = 0; j < t_mod.cols; ++j) {
            ag += w_g[j] * row[j];
            as += w_s[j] * row[j];
        }
        e_g[i] = ag;
        e_s[i] = as;
        g[i] = sigmoid(ag);
        s[i] = std::tanh(as);
        delta_m[i] = alpha * g[i] * s[i];
    }
}

template <class R>
void aggregate_residual(const Mat<R>& t_mod, const std::vector<R>& delta_m,
                        const std::vector<R>& w_a, std::vector<R>& e_a,
                        std::vector<R>& a, R& big_delta) {
    size_t m = t_mod.rows;
    if (m == 0) fail(Errc::invalid_argument, "aggregate_residual: M must be >= 1");
    e_a.resize(m);
    for (size_t i = 0; i < m; ++i) {
        const R* row = t_mod.row(i);
        R acc = R(0);
        for (size_t j = 0; j < t_mod.cols; ++j) acc += w_a[j] * row[j];
        e_a[i] = acc;
    }
    a = e_a;
    detail::softmax_row(a.data(), m);
    big_delta = R(0);
    for (size_t i = 0; i < m; ++i) big_delta += a[i] * delta_m[i];
}

template <class R>
Prediction forward(const Record& record, const BaseJudgment& judgment,
                   const CalibParams<R>& params, ForwardTrace<R>* trace) {
    const CalibConfig& cfg = params.cfg;
    Prediction pred;
    pred.q_b = judgment.q_b;
    pred.u_b = judgment.u_b;

    if (cfg.mode == Mode::base_only) {
        pred.delta = 0.0;
        pred.y_hat = judgment.q_b;
        if (trace) {
            *trace = ForwardTrace<R>{};
            trace->y_hat = pred.y_hat;
        }
        return pred;
    }

    if (record.n_vis < 1) {
        fail(Errc::invalid_argument,
             "record '" + record.id + "': no visual tokens");
    }
    ForwardTrace<R> local;
    ForwardTrace<R>& tr = trace ? *trace : local;
    tr = ForwardTrace<R>{};

    tr.proj_vis = project_rows<R>(record.h_vis, record.n_vis, cfg.d_m,
                                  params.w_pvis, params.b_pvis);
    tr.proj_aux = project_rows<R>(record.h_aux, record.n_aux, cfg.d_a,
                                  params.w_paux, params.b_paux);
    tr.bank = build_token_bank(tr.proj_vis, tr.proj_aux);

    AttnResult<R> at = cross_attend(params.q_c, tr.bank, params.w_q, params.w_k,
                                    params.w_v, cfg.heads);
    tr.qp = std::move(at.qp);
    tr.kp = std::move(at.kp);
    tr.vp = std::move(at.vp);
    tr.attn = std::move(at.attn);
    tr.t = std::move(at.t);

    tr.c_b[0] = static_cast<R>(judgment.q_b);
    tr.c_b[1] = static_cast<R>(judgment.u_b);
    if (cfg.mode == Mode::direct_regression) {
        tr.t_mod = tr.t;  // FiLM disabled: gamma = 1, beta = 0
    } else {
        film_params(params.w_gamma, params.b_gamma, params.w_beta,
                    params.b_beta, tr.c_b[0], tr.c_b[1], tr.gamma, tr.beta);
        tr.t_mod = film_modulate(tr.t, tr.gamma, tr.beta);
    }

    if (cfg.mode == Mode::residual_calibration) {
        residual_proposals(tr.t_mod, params.w_g, params.b_g, params.w_s,
                           params.b_s, static_cast<R>(cfg.alpha), tr.e_g,
                           tr.e_s, tr.g, tr.s, tr.delta_m);
        aggregate_residual(tr.t_mod, tr.delta_m, params.w_a, tr.e_a, tr.a,
                           tr.big_delta);
        pred.delta = static_cast<double>(tr.big_delta);
        pred.y_hat = judgment.q_b + pred.delta;
        pred.per_token.resize(cfg.m);
        for (uint32_t i = 0; i < cfg.m; ++i) {
            pred.per_token[i] = {static_cast<double>(tr.a[i]),
                                 static_cast<double>(tr.g[i]),
                                 static_cast<double>(tr.s[i]),
                                 static_cast<double>(tr.delta_m[i])};
        }
    } else {
        // direct / score-conditioned: one regression head over the mean token
        tr.t_mean.assign(cfg.d, R(0));
        for (size_t m = 0; m < tr.t_mod.rows; ++m) {
            const R* row = tr.t_mod.row(m);
            for (size_t j = 0; j < cfg.d; ++j) tr.t_mean[j] += row[j];
        }
        R inv_m = R(1) / static_cast<R>(tr.t_mod.rows);
        for (R& x : tr.t_mean) x *= inv_m;
        R e = params.b_g;
        for (size_t j = 0; j < cfg.d; ++j) e += params.w_g[j] * tr.t_mean[j];
        tr.e_out = e;
        pred.delta = 0.0;
        pred.y_hat = static_cast<double>(sigmoid(e));
    }
    tr.y_hat = pred.y_hat;
    return pred;
}

template <class R>
CalibParams<R> CalibParams<R>::zeros(const CalibConfig& cfg) {
    cfg.validate();
    CalibParams<R> p;
    p.cfg = cfg;
    p.w_pvis = Mat<R>(cfg.d, cfg.d_m);
    p.b_pvis.assign(cfg.d, R(0));
    p.w_paux = Mat<R>(cfg.d, cfg.d_a);
    p.b_paux.assign(cfg.d, R(0));
    p.q_c = Mat<R>(cfg.m, cfg.d);
    p.w_q = Mat<R>(cfg.d, cfg.d);
    p.w_k = Mat<R>(cfg.d, cfg.d);
    p.w_v = Mat<R>(cfg.d, cfg.d);
    p.w_gamma = Mat<R>(cfg.d, 2);
    p.b_gamma.assign(cfg.d, R(0));
    p.w_beta = Mat<R>(cfg.d, 2);
    p.b_beta.assign(cfg.d, R(0));
    p.w_g.assign(cfg.d, R(0));
    p.w_s.assign(cfg.d, R(0));
    p.w_a.assign(cfg.d, R(0));
    return p;
}

template <class R>
std::vector<TensorRef<R>> CalibParams<R>::tensors() {
    return {
        {"W_Pvis", w_pvis.v.data(), w_pvis.size()},
        {"b_Pvis", b_pvis.data(), b_pvis.size()},
        {"W_Paux", w_paux.v.data(), w_paux.size()},
        {"b_Paux", b_paux.data(), b_paux.size()},
        {"Q_c", q_c.v.data(), q_c.size()},
        {"W_Q", w_q.v.data(), w_q.size()},
        {"W_K", w_k.v.data(), w_k.size()},
        {"W_V", w_v.v.data(), w_v.size()},
        {"W_gamma", w_gamma.v.data(), w_gamma.size()},
        {"b_gamma", b_gamma.data(), b_gamma.size()},
        {"W_beta", w_beta.v.data(), w_beta.size()},
        {"b_beta", b_beta.data(), b_beta.size()},
        {"w_g", w_g.data(), w_g.size()},
        {"b_g", &b_g, 1},
        {"w_s", w_s.data(), w_s.size()},
        {"b_s", &b_s, 1},
        {"w_a", w_a.data(), w_a.size()},
    };
}

template <class R>
std::vector<TensorRef<const R>> CalibParams<R>::tensors() const {
    auto refs = const_cast<CalibParams<R>*>(this)->tensors();
    std::vector<TensorRef<const R>> out;
    out.reserve(refs.size());
    for (const auto& r : refs) out.push_back({r.name, r.data, r.size});
    return out;
}

template <class R>
size_t CalibParams<R>::parameter_count() const {
    size_t n = 0;
    for (const auto& t : tensors()) n += t.size;
    return n;
}

template <class R>
CalibParams<R> init_params(const CalibConfig& cfg, uint64_t seed) {
    CalibParams<R> p = CalibParams<R>::zeros(cfg);
    Rng rng(derive_seed(seed, "init"));
    auto fill_normal = [&](Mat<R>& m, double std) {
        for (R& x : m.v) x = static_cast<R>(std * rng.normal());
    };
    // Fan-in scaling on the value path keeps attended-token activations near
    // input scale, so the zero-started heads see usable gradient from the
    // first step. Query/key weights stay small: attention opens near-uniform
    // (mean pooling) and sharpens as training selects tokens.
    fill_normal(p.w_pvis, 1.0 / std::sqrt(static_cast<double>(cfg.d_m)));
    if (cfg.d_a > 0) {
        fill_normal(p.w_paux, 1.0 / std::sqrt(static_cast<double>(cfg.d_a)));
    }
    fill_normal(p.w_v, 1.0 / std::sqrt(static_cast<double>(cfg.d)));
    fill_normal(p.q_c, 0.02);
    fill_normal(p.w_q, 0.02);
    fill_normal(p.w_k, 0.02);
    // FiLM starts as the identity; heads start at zero.
    std::fill(p.b_gamma.begin(), p.b_gamma.end(), R(1));
    return p;
}

}  // namespace dpcvqa
