#include "core/training.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "core/evaluation.hpp"

namespace dpcvqa {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) {
        fail(Errc::invalid_argument, "learning_rate must be > 0");
    }
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        fail(Errc::invalid_argument, "beta1/beta2 must be in [0, 1)");
    }
    if (batch_size < 1) fail(Errc::invalid_argument, "batch_size must be >= 1");
    if (lambda_res < 0.0) fail(Errc::invalid_argument, "lambda_res must be >= 0");
    if (!(smooth_l1_beta > 0.0)) {
        fail(Errc::invalid_argument, "smooth_l1_beta must be > 0");
    }
    if (weight_decay < 0.0) {
        fail(Errc::invalid_argument, "weight_decay must be >= 0");
    }
}

double central_diff(const std::function<double(double)>& f, double x,
                    double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

FdReport fd_check(const Record& rec, const VerbalizerSet& vset,
                  CalibParams<double> params, double label,
                  const TrainConfig& cfg, double h, bool corrupt) {
    BaseJudgment j = judge(rec, vset);
    auto loss = [&]() -> double {
        Prediction pred = forward(rec, j, params);
        return sample_loss_value<double>(pred.y_hat, pred.delta, label,
                                         cfg.lambda_res, cfg.smooth_l1_beta);
    };

    CalibParams<double> grad = CalibParams<double>::zeros(params.cfg);
    {
        ForwardTrace<double> tr;
        forward(rec, j, params, &tr);
        accumulate_gradients(rec, tr, params, label, cfg.lambda_res,
                             cfg.smooth_l1_beta, 1.0, grad);
    }
    if (corrupt) {
        for (auto& t : grad.tensors()) {
            bool done = false;
            for (size_t i = 0; i < t.size; ++i) {
                if (std::abs(t.data[i]) > 1e-12) {
                    t.data[i] *= 2.0;
                    done = true;
                    break;
                }
            }
            if (done) break;
        }
    }

    FdReport report;
    auto tg = grad.tensors();
    auto tp = params.tensors();
    for (size_t t = 0; t < tp.size(); ++t) {
        FdWorst worst;
        worst.tensor = tp[t].name;
        for (size_t i = 0; i < tp[t].size; ++i) {
            double theta = tp[t].data[i];
            tp[t].data[i] = theta + h;
            double lp = loss();
            tp[t].data[i] = theta - h;
            double lm = loss();
            tp[t].data[i] = theta;
            double numeric = (lp - lm) / (2.0 * h);
            double analytic = tg[t].data[i];
            double denom =
                std::max(1e-8, std::max(std::abs(analytic), std::abs(numeric)));
            double rel = std::abs(analytic - numeric) / denom;
            if (rel >= worst.rel_err) {
                worst = {tp[t].name, i, analytic, numeric, rel};
            }
            report.max_rel_err = std::max(report.max_rel_err, rel);
        }
        report.tensors.push_back(std::move(worst));
    }
    return report;
}

namespace {

Record random_record(Rng& rng, uint32_t k, uint32_t d_m, uint32_t d_a,
                     uint32_t n_vis, uint32_t n_aux) {
    Record r;
    r.id = "fd_record";
    r.n_vis = n_vis;
    r.n_aux = n_aux;
    r.logits.resize(k);
    for (float& x : r.logits) x = static_cast<float>(rng.normal());
    r.h_vis.resize(static_cast<size_t>(n_vis) * d_m);
    for (float& x : r.h_vis) x = static_cast<float>(rng.normal());
    r.h_aux.resize(static_cast<size_t>(n_aux) * d_a);
    for (float& x : r.h_aux) x = static_cast<float>(rng.normal());
    return r;
}

}  // namespace

FdSweepResult fd_sweep(uint64_t seed, bool corrupt) {
    const uint32_t d_choices[] = {4, 8, 16};
    const uint32_t m_choices[] = {1, 2, 4};
    const uint32_t n_choices[] = {1, 3, 5};
    const uint32_t na_choices[] = {0, 2};
    const Mode modes[] = {Mode::base_only, Mode::direct_regression,
                          Mode::score_conditioned, Mode::residual_calibration};
    constexpr int kConfigs = 24;
    constexpr double kH = 1e-5;

    Rng rng(derive_seed(seed, "fd-sweep"));
    TrainConfig cfg;
    VerbalizerSet vset = default_verbalizers(5);

    FdSweepResult result;
    bool corrupt_pending = corrupt;
    for (int c = 0; c < kConfigs; ++c) {
        CalibConfig cc;
        cc.d = d_choices[rng.below(3)];
        cc.m = m_choices[rng.below(3)];
        cc.d_m = 3;
        cc.d_a = 2;
        cc.k = 5;
        cc.alpha = 0.2;
        uint32_t n_vis = n_choices[rng.below(3)];
        uint32_t n_aux = na_choices[rng.below(2)];
        Record rec = random_record(rng, cc.k, cc.d_m, cc.d_a, n_vis, n_aux);

        CalibParams<double> params = CalibParams<double>::zeros(cc);
        for (auto& t : params.tensors()) {
            for (size_t i = 0; i < t.size; ++i) t.data[i] = 0.4 * rng.normal();
        }
        BaseJudgment j = judge(rec, vset);

        for (Mode mode : modes) {
            params.cfg.mode = mode;
            Prediction pred = forward(rec, j, params);
            if (mode == Mode::residual_calibration) {
                // keep |Delta| away from the |.| kink so central differences
                // stay on one branch
                for (int tries = 0; std::abs(pred.delta) < 1e-3 && tries < 50;
                     ++tries) {
                    params.b_s += 0.1;
                    pred = forward(rec, j, params);
                }
            }
            double label = pred.y_hat - rng.uniform(-0.6, 0.6);
            FdReport rep = fd_check(rec, vset, params, label, cfg, kH,
                                    corrupt_pending &&
                                        mode == Mode::residual_calibration);
            if (corrupt_pending && mode == Mode::residual_calibration) {
                corrupt_pending = false;
            }
            FdSweepEntry entry;
            entry.config = "d=" + std::to_string(cc.d) +
                           " M=" + std::to_string(cc.m) +
                           " N=" + std::to_string(n_vis) +
                           " Na=" + std::to_string(n_aux) +
                           " mode=" + mode_name(mode);
            entry.max_rel_err = rep.max_rel_err;
            if (rep.max_rel_err >= result.max_rel_err) {
                result.max_rel_err = rep.max_rel_err;
                result.worst_config = entry.config;
                result.worst_tensors = rep.tensors;
            }
            result.entries.push_back(std::move(entry));
        }
    }
    return result;
}

std::string fd_sweep_report(const FdSweepResult& r) {
    char buf[160];
    std::string out = "config\tmax_rel_err\n";
    for (const FdSweepEntry& e : r.entries) {
        std::snprintf(buf, sizeof(buf), "%s\t%.3e\n", e.config.c_str(),
                      e.max_rel_err);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "\nworst run: %s (max_rel_err %.3e)\n",
                  r.worst_config.c_str(), r.max_rel_err);
    out += buf;
    out += "tensor\tworst_index\tanalytic\tnumeric\trel_err\n";
    for (const FdWorst& w : r.worst_tensors) {
        std::snprintf(buf, sizeof(buf), "%s\t%zu\t%.9e\t%.9e\t%.3e\n",
                      w.tensor.c_str(), w.index, w.analytic, w.numeric,
                      w.rel_err);
        out += buf;
    }
    return out;
}

namespace {

struct Sample {
    const Record* rec;
    BaseJudgment judgment;
    double y;
};

std::vector<Sample> collect_samples(const Container& data,
                                    const std::vector<std::string>& ids,
                                    const VerbalizerSet& vset,
                                    const char* pool) {
    std::vector<Sample> out;
    out.reserve(ids.size());
    for (const std::string& id : ids) {
        const Record& r = data.find(id);
        if (!r.labeled()) {
            fail(Errc::data, std::string("unlabeled record '") + id +
                                 "' in " + pool + " pool");
        }
        out.push_back({&r, judge(r, vset), normalize_mos(r.mos_raw, data.header)});
    }
    return out;
}

}  // namespace

TrainResult train(const Container& data,
                  const std::vector<std::string>& train_ids,
                  const std::vector<std::string>& val_ids,
                  CalibParams<float> params, const TrainConfig& cfg,
                  const VerbalizerSet& vset, const EpochCallback& cb) {
    cfg.validate();
    params.cfg.validate();
    if (params.cfg.mode == Mode::base_only) {
        fail(Errc::invalid_argument,
             "base_only mode has no trainable parameters");
    }
    if (train_ids.empty()) fail(Errc::data, "empty training pool");

    std::vector<Sample> train_set =
        collect_samples(data, train_ids, vset, "train");
    std::vector<Sample> val_set = collect_samples(data, val_ids, vset, "val");

    auto eval_val = [&](const CalibParams<float>& p) {
        std::vector<double> yh(val_set.size()), yv(val_set.size());
        for (size_t i = 0; i < val_set.size(); ++i) {
            Prediction pred = forward(*val_set[i].rec, val_set[i].judgment, p);
            yh[i] = pred.y_hat;
            yv[i] = val_set[i].y;
        }
        return std::pair<double, double>{srcc(yh, yv), plcc(yh, yv)};
    };

    TrainResult res;
    res.best_params = params;

    if (cfg.epochs == 0) {
        auto [vs, vp] = eval_val(params);
        res.best_val_srcc = vs;
        res.best_epoch = 0;
        return res;
    }

    AdamWState<float> st = AdamWState<float>::init(params.cfg);
    double best = -2.0;
    const float lambda = static_cast<float>(cfg.lambda_res);
    const float sl1_beta = static_cast<float>(cfg.smooth_l1_beta);

    std::vector<size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), size_t{0});

    for (uint32_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), size_t{0});
        Rng shuffle_rng(derive_seed(cfg.seed, "epoch-shuffle", epoch));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        double abs_delta_sum = 0.0;
        for (size_t start = 0; start < order.size();
             start += cfg.batch_size) {
            size_t stop = std::min(order.size(),
                                   start + static_cast<size_t>(cfg.batch_size));
            double scale = 1.0 / static_cast<double>(stop - start);
            CalibParams<float> grad = CalibParams<float>::zeros(params.cfg);
            for (size_t b = start; b < stop; ++b) {
                const Sample& s = train_set[order[b]];
                ForwardTrace<float> tr;
                Prediction pred = forward(*s.rec, s.judgment, params, &tr);
                loss_sum += sample_loss_value<double>(pred.y_hat, pred.delta,
                                                      s.y, cfg.lambda_res,
                                                      cfg.smooth_l1_beta);
                abs_delta_sum += std::abs(pred.delta);
                accumulate_gradients(*s.rec, tr, params, s.y,
                                     static_cast<double>(lambda),
                                     static_cast<double>(sl1_beta), scale,
                                     grad);
            }
            check_finite_gradients(grad);
            adamw_step(params, grad, st, cfg);
        }

        auto [vs, vp] = eval_val(params);
        EpochStats es{epoch, loss_sum / static_cast<double>(train_set.size()),
                      abs_delta_sum / static_cast<double>(train_set.size()), vs,
                      vp};
        res.history.push_back(es);
        if (cb) cb(es);
        if (vs > best) {
            best = vs;
            res.best_epoch = epoch;
            res.best_val_srcc = vs;
            res.best_params = params;
        }
    }
    res.steps = st.step;
    return res;
}

}  // namespace dpcvqa
