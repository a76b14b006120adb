#include "dpcvqa/dpcvqa.h"

#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "core/calibnet.hpp"
#include "core/container.hpp"
#include "core/evaluation.hpp"
#include "core/training.hpp"

struct dpcvqa_container {
    dpcvqa::Container data;
};

struct dpcvqa_model {
    dpcvqa::CalibParams<float> params;
    dpcvqa::VerbalizerSet vset;
    dpcvqa::CheckpointMeta meta;
};

namespace {

thread_local std::string g_last_error;

dpcvqa_status map_errc(dpcvqa::Errc c) {
    using dpcvqa::Errc;
    switch (c) {
        case Errc::invalid_argument: return DPCVQA_E_INVALID_ARGUMENT;
        case Errc::shape_mismatch:   return DPCVQA_E_SHAPE_MISMATCH;
        case Errc::length_mismatch:  return DPCVQA_E_LENGTH_MISMATCH;
        case Errc::not_finite:       return DPCVQA_E_NOT_FINITE;
        case Errc::out_of_range:     return DPCVQA_E_OUT_OF_RANGE;
        case Errc::bad_magic:        return DPCVQA_E_BAD_MAGIC;
        case Errc::bad_version:      return DPCVQA_E_BAD_VERSION;
        case Errc::truncated:        return DPCVQA_E_TRUNCATED;
        case Errc::format:           return DPCVQA_E_FORMAT;
        case Errc::io:               return DPCVQA_E_IO;
        case Errc::numeric:          return DPCVQA_E_NUMERIC;
        case Errc::undefined_metric: return DPCVQA_E_UNDEFINED_METRIC;
        case Errc::protocol:         return DPCVQA_E_PROTOCOL;
        case Errc::data:             return DPCVQA_E_DATA;
    }
    return DPCVQA_E_INTERNAL;
}

template <class F>
dpcvqa_status guard(F&& f) {
    try {
        f();
        g_last_error.clear();
        return DPCVQA_OK;
    } catch (const dpcvqa::Error& e) {
        g_last_error = e.what();
        return map_errc(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return DPCVQA_E_INTERNAL;
    }
}

void require(bool ok, const char* what) {
    if (!ok) dpcvqa::fail(dpcvqa::Errc::invalid_argument, what);
}

char* dup_string(const std::string& s) {
    char* out = new (std::nothrow) char[s.size() + 1];
    if (!out) dpcvqa::fail(dpcvqa::Errc::io, "out of memory");
    std::memcpy(out, s.data(), s.size() + 1);
    return out;
}

dpcvqa::Mode mode_from_tag(int32_t tag) {
    if (tag < DPCVQA_MODE_BASE_ONLY || tag > DPCVQA_MODE_RESIDUAL) {
        dpcvqa::fail(dpcvqa::Errc::invalid_argument,
                     "unknown mode tag " + std::to_string(tag));
    }
    return static_cast<dpcvqa::Mode>(tag);
}

dpcvqa::TrainConfig to_core(const dpcvqa_train_config& c) {
    dpcvqa::TrainConfig tc;
    tc.learning_rate = c.learning_rate;
    tc.weight_decay = c.weight_decay;
    tc.beta1 = c.beta1;
    tc.beta2 = c.beta2;
    tc.epsilon = c.epsilon;
    tc.batch_size = c.batch_size;
    tc.epochs = c.epochs;
    tc.lambda_res = c.lambda_res;
    tc.smooth_l1_beta = c.smooth_l1_beta;
    tc.seed = c.seed;
    return tc;
}

void fill_metrics(dpcvqa_metrics* out, const dpcvqa::MetricReport& r) {
    if (!out) return;
    out->srcc = r.srcc;
    out->plcc = r.plcc;
    out->mean_abs_delta = r.mean_abs_delta;
    out->n = r.n;
}

// Rejects mismatched model/container pairs before any compute runs.
void check_dims(const dpcvqa_model* m, const dpcvqa_container* c) {
    const dpcvqa::CalibConfig& cfg = m->params.cfg;
    const dpcvqa::ContainerHeader& h = c->data.header;
    if (cfg.d_m != h.d_m || cfg.d_a != h.d_a || cfg.k != h.k) {
        dpcvqa::fail(dpcvqa::Errc::shape_mismatch,
                     "model dims (d_m=" + std::to_string(cfg.d_m) +
                         ", d_a=" + std::to_string(cfg.d_a) +
                         ", K=" + std::to_string(cfg.k) +
                         ") do not match container header (d_m=" +
                         std::to_string(h.d_m) + ", d_a=" +
                         std::to_string(h.d_a) + ", K=" + std::to_string(h.k) +
                         ")");
    }
}

}  // namespace

extern "C" {

uint32_t dpcvqa_abi_version(void) { return 1; }

const char* dpcvqa_status_name(dpcvqa_status status) {
    switch (status) {
        case DPCVQA_OK:                 return "ok";
        case DPCVQA_E_INVALID_ARGUMENT: return "invalid_argument";
        case DPCVQA_E_SHAPE_MISMATCH:   return "shape_mismatch";
        case DPCVQA_E_LENGTH_MISMATCH:  return "length_mismatch";
        case DPCVQA_E_NOT_FINITE:       return "not_finite";
        case DPCVQA_E_OUT_OF_RANGE:     return "out_of_range";
        case DPCVQA_E_BAD_MAGIC:        return "bad_magic";
        case DPCVQA_E_BAD_VERSION:      return "bad_version";
        case DPCVQA_E_TRUNCATED:        return "truncated";
        case DPCVQA_E_FORMAT:           return "format";
        case DPCVQA_E_IO:               return "io";
        case DPCVQA_E_NUMERIC:          return "numeric";
        case DPCVQA_E_UNDEFINED_METRIC: return "undefined_metric";
        case DPCVQA_E_PROTOCOL:         return "protocol";
        case DPCVQA_E_DATA:             return "data";
        case DPCVQA_E_INTERNAL:         return "internal";
    }
    return "unknown";
}

const char* dpcvqa_last_error(void) { return g_last_error.c_str(); }

void dpcvqa_string_free(char* s) { delete[] s; }

uint64_t dpcvqa_derive_seed(uint64_t seed, const char* label, uint64_t index) {
    return dpcvqa::derive_seed(seed, label ? label : "", index);
}

/* ---- containers ---------------------------------------------------------- */

void dpcvqa_synth_config_init(dpcvqa_synth_config* cfg) {
    if (!cfg) return;
    dpcvqa::SyntheticConfig d;
    cfg->record_count = d.record_count;
    cfg->k = d.k;
    cfg->d_m = d.d_m;
    cfg->d_a = d.d_a;
    cfg->n_vis = d.n_vis;
    cfg->n_aux = d.n_aux;
    cfg->noise_sigma = d.noise_sigma;
    cfg->seed = d.seed;
}

dpcvqa_status dpcvqa_container_generate(const dpcvqa_synth_config* cfg,
                                        dpcvqa_container** out) {
    return guard([&] {
        require(cfg && out, "null argument");
        dpcvqa::SyntheticConfig sc;
        sc.record_count = cfg->record_count;
        sc.k = cfg->k;
        sc.d_m = cfg->d_m;
        sc.d_a = cfg->d_a;
        sc.n_vis = cfg->n_vis;
        sc.n_aux = cfg->n_aux;
        sc.noise_sigma = cfg->noise_sigma;
        sc.seed = cfg->seed;
        *out = new dpcvqa_container{dpcvqa::generate_synthetic(sc)};
    });
}

dpcvqa_status dpcvqa_container_open(const char* path, dpcvqa_container** out) {
    return guard([&] {
        require(path && out, "null argument");
        *out = new dpcvqa_container{dpcvqa::read_container(path)};
    });
}

dpcvqa_status dpcvqa_container_save(const dpcvqa_container* c,
                                    const char* path) {
    return guard([&] {
        require(c && path, "null argument");
        dpcvqa::write_container(path, c->data);
    });
}

dpcvqa_status dpcvqa_container_info_get(const dpcvqa_container* c,
                                        dpcvqa_container_info* out) {
    return guard([&] {
        require(c && out, "null argument");
        const dpcvqa::ContainerHeader& h = c->data.header;
        out->version = h.version;
        out->k = h.k;
        out->d_m = h.d_m;
        out->d_a = h.d_a;
        out->record_count = c->data.records.size();
        out->labeled_count = dpcvqa::labeled_ids(c->data).size();
        out->mos_lo = h.mos_lo;
        out->mos_hi = h.mos_hi;
    });
}

void dpcvqa_container_free(dpcvqa_container* c) { delete c; }

/* ---- models --------------------------------------------------------------- */

void dpcvqa_model_config_init(dpcvqa_model_config* cfg) {
    if (!cfg) return;
    dpcvqa::CalibConfig d;
    cfg->d = d.d;
    cfg->queries = d.m;
    cfg->heads = d.heads;
    cfg->alpha = d.alpha;
    cfg->mode = static_cast<int32_t>(d.mode);
}

dpcvqa_status dpcvqa_model_create(const dpcvqa_model_config* cfg,
                                  const dpcvqa_container* dims_from,
                                  uint64_t seed, dpcvqa_model** out) {
    return guard([&] {
        require(cfg && dims_from && out, "null argument");
        dpcvqa::CalibConfig cc;
        cc.d = cfg->d;
        cc.m = cfg->queries;
        cc.heads = cfg->heads;
        cc.alpha = cfg->alpha;
        cc.mode = mode_from_tag(cfg->mode);
        cc.d_m = dims_from->data.header.d_m;
        cc.d_a = dims_from->data.header.d_a;
        cc.k = dims_from->data.header.k;
        auto m = std::make_unique<dpcvqa_model>();
        m->params = cc.mode == dpcvqa::Mode::base_only
                        ? dpcvqa::CalibParams<float>::zeros(cc)
                        : dpcvqa::init_params<float>(cc, seed);
        m->vset = dpcvqa::default_verbalizers(cc.k);
        *out = m.release();
    });
}

dpcvqa_status dpcvqa_model_open(const char* path, dpcvqa_model** out) {
    return guard([&] {
        require(path && out, "null argument");
        auto [params, meta] = dpcvqa::load_checkpoint(path);
        auto m = std::make_unique<dpcvqa_model>();
        m->params = std::move(params);
        m->meta = meta;
        m->vset = dpcvqa::default_verbalizers(m->params.cfg.k);
        *out = m.release();
    });
}

dpcvqa_status dpcvqa_model_save(const dpcvqa_model* m, const char* path) {
    return guard([&] {
        require(m && path, "null argument");
        dpcvqa::save_checkpoint(path, m->params, m->meta);
    });
}

dpcvqa_status dpcvqa_model_get_mode(const dpcvqa_model* m, int32_t* mode) {
    return guard([&] {
        require(m && mode, "null argument");
        *mode = static_cast<int32_t>(m->params.cfg.mode);
    });
}

dpcvqa_status dpcvqa_model_set_anchors(dpcvqa_model* m, const double* anchors,
                                       uint32_t k) {
    return guard([&] {
        require(m && anchors, "null argument");
        if (k != m->params.cfg.k) {
            dpcvqa::fail(dpcvqa::Errc::length_mismatch,
                         "anchor count " + std::to_string(k) +
                             " does not match model K=" +
                             std::to_string(m->params.cfg.k));
        }
        dpcvqa::VerbalizerSet vset = dpcvqa::default_verbalizers(k);
        vset.anchors.assign(anchors, anchors + k);
        vset.validate();
        m->vset = std::move(vset);
    });
}

dpcvqa_status dpcvqa_model_set_heads(dpcvqa_model* m, uint32_t heads) {
    return guard([&] {
        require(m, "null argument");
        dpcvqa::CalibConfig cc = m->params.cfg;
        cc.heads = heads;
        cc.validate();
        m->params.cfg = cc;
    });
}

void dpcvqa_model_free(dpcvqa_model* m) { delete m; }

/* ---- training -------------------------------------------------------------- */

void dpcvqa_train_config_init(dpcvqa_train_config* cfg) {
    if (!cfg) return;
    dpcvqa::TrainConfig d;
    cfg->learning_rate = d.learning_rate;
    cfg->weight_decay = d.weight_decay;
    cfg->beta1 = d.beta1;
    cfg->beta2 = d.beta2;
    cfg->epsilon = d.epsilon;
    cfg->batch_size = d.batch_size;
    cfg->epochs = d.epochs;
    cfg->lambda_res = d.lambda_res;
    cfg->smooth_l1_beta = d.smooth_l1_beta;
    cfg->seed = d.seed;
}

dpcvqa_status dpcvqa_train_fold(dpcvqa_model* m, const dpcvqa_container* data,
                                const dpcvqa_train_config* cfg, uint32_t fold,
                                dpcvqa_epoch_callback cb, void* user) {
    return guard([&] {
        require(m && data && cfg, "null argument");
        check_dims(m, data);
        if (fold >= dpcvqa::SplitPlan::kFoldCount) {
            dpcvqa::fail(dpcvqa::Errc::out_of_range,
                         "fold " + std::to_string(fold) + " out of range 0-" +
                             std::to_string(dpcvqa::SplitPlan::kFoldCount - 1));
        }
        dpcvqa::SplitPlan plan = dpcvqa::make_folds(
            dpcvqa::labeled_ids(data->data),
            dpcvqa::protocol_split_seed(cfg->seed));
        dpcvqa::TrainConfig tc = to_core(*cfg);
        tc.seed = dpcvqa::protocol_train_seed(cfg->seed, fold);
        dpcvqa::EpochCallback ecb;
        if (cb) {
            ecb = [cb, user](const dpcvqa::EpochStats& s) {
                cb(s.epoch, s.train_loss, s.mean_abs_delta, s.val_srcc,
                   s.val_plcc, user);
            };
        }
        dpcvqa::TrainResult res = dpcvqa::train(
            data->data, plan.folds[fold].train_ids, plan.folds[fold].val_ids,
            m->params, tc, m->vset, ecb);
        m->params = std::move(res.best_params);
        m->meta.step = res.steps;
        m->meta.val_srcc = static_cast<float>(res.best_val_srcc);
    });
}

/* ---- scoring / evaluation ----------------------------------------------------- */

dpcvqa_status dpcvqa_score_csv(const dpcvqa_model* m,
                               const dpcvqa_container* data, char** out_csv) {
    return guard([&] {
        require(m && data && out_csv, "null argument");
        check_dims(m, data);
        auto rows = dpcvqa::score_rows(m->params, data->data, m->vset);
        *out_csv = dup_string(dpcvqa::score_csv(rows));
    });
}

dpcvqa_status dpcvqa_evaluate_fold(const dpcvqa_model* m,
                                   const dpcvqa_container* data, uint64_t seed,
                                   uint32_t fold, int32_t pool,
                                   dpcvqa_metrics* out, char** out_csv) {
    return guard([&] {
        require(m && data, "null argument");
        check_dims(m, data);
        if (fold >= dpcvqa::SplitPlan::kFoldCount) {
            dpcvqa::fail(dpcvqa::Errc::out_of_range,
                         "fold " + std::to_string(fold) + " out of range 0-" +
                             std::to_string(dpcvqa::SplitPlan::kFoldCount - 1));
        }
        dpcvqa::SplitPlan plan =
            dpcvqa::make_folds(dpcvqa::labeled_ids(data->data),
                               dpcvqa::protocol_split_seed(seed));
        const dpcvqa::FoldSplit& f = plan.folds[fold];
        const std::vector<std::string>* ids = nullptr;
        switch (pool) {
            case DPCVQA_POOL_TRAIN: ids = &f.train_ids; break;
            case DPCVQA_POOL_VAL:   ids = &f.val_ids; break;
            case DPCVQA_POOL_TEST:  ids = &f.test_ids; break;
            default:
                dpcvqa::fail(dpcvqa::Errc::invalid_argument,
                             "unknown pool tag " + std::to_string(pool));
        }
        dpcvqa::MetricReport r =
            dpcvqa::evaluate(m->params, data->data, *ids, m->vset);
        fill_metrics(out, r);
        if (out_csv) *out_csv = dup_string(dpcvqa::score_csv(r.rows));
    });
}

dpcvqa_status dpcvqa_evaluate_all(const dpcvqa_model* m,
                                  const dpcvqa_container* data,
                                  dpcvqa_metrics* out, char** out_csv) {
    return guard([&] {
        require(m && data, "null argument");
        check_dims(m, data);
        std::vector<std::string> ids = dpcvqa::labeled_ids(data->data);
        dpcvqa::MetricReport r =
            dpcvqa::evaluate(m->params, data->data, ids, m->vset);
        fill_metrics(out, r);
        if (out_csv) *out_csv = dup_string(dpcvqa::score_csv(r.rows));
    });
}

dpcvqa_status dpcvqa_run_protocol(const dpcvqa_model* m,
                                  const dpcvqa_container* data,
                                  const dpcvqa_train_config* cfg,
                                  dpcvqa_metrics* mean_out, char** out_tsv) {
    return guard([&] {
        require(m && data && cfg, "null argument");
        check_dims(m, data);
        dpcvqa::ProtocolResult r =
            dpcvqa::run_protocol(data->data, m->params.cfg, to_core(*cfg),
                                 cfg->seed, m->vset);
        if (mean_out) {
            mean_out->srcc = r.mean_srcc;
            mean_out->plcc = r.mean_plcc;
            mean_out->mean_abs_delta = 0;
            uint64_t n = 0;
            for (const auto& f : r.folds) {
                mean_out->mean_abs_delta += f.report.mean_abs_delta;
                n += f.report.n;
            }
            mean_out->mean_abs_delta /= static_cast<double>(r.folds.size());
            mean_out->n = n;
        }
        if (out_tsv) *out_tsv = dup_string(dpcvqa::protocol_tsv(r));
    });
}

dpcvqa_status dpcvqa_analyze(const dpcvqa_model* m,
                             const dpcvqa_container* data, char** samples_csv,
                             char** hist_csv, char** deciles_csv) {
    return guard([&] {
        require(m && data, "null argument");
        check_dims(m, data);
        std::vector<std::string> ids = dpcvqa::labeled_ids(data->data);
        dpcvqa::AnalyzeResult r =
            dpcvqa::analyze(m->params, data->data, ids, m->vset);
        if (samples_csv) {
            *samples_csv = dup_string(dpcvqa::analyze_samples_csv(r.rows));
        }
        if (hist_csv) *hist_csv = dup_string(dpcvqa::analyze_hist_csv(r));
        if (deciles_csv) {
            *deciles_csv = dup_string(dpcvqa::analyze_deciles_csv(r));
        }
    });
}

/* ---- gradient verification ------------------------------------------------------ */

dpcvqa_status dpcvqa_fd_check(uint64_t seed, int32_t corrupt,
                              double* max_rel_error, char** report) {
    return guard([&] {
        dpcvqa::FdSweepResult r = dpcvqa::fd_sweep(seed, corrupt != 0);
        if (max_rel_error) *max_rel_error = r.max_rel_err;
        if (report) *report = dup_string(dpcvqa::fd_sweep_report(r));
    });
}

}  // extern "C"
