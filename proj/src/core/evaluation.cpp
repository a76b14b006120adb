#include "core/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

namespace dpcvqa {

std::vector<double> fractional_ranks(std::span<const double> v) {
    std::vector<size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(),
              [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    size_t i = 0;
    while (i < idx.size()) {
        size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (size_t k = i; k <= j; ++k) ranks[idx[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

namespace {

double pearson_checked(std::span<const double> a, std::span<const double> b) {
    size_t n = a.size();
    double ma = 0, mb = 0;
    for (size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0, saa = 0, sbb = 0;
    for (size_t i = 0; i < n; ++i) {
        double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) {
        fail(Errc::undefined_metric,
             "correlation undefined: constant input vector");
    }
    return sab / std::sqrt(saa * sbb);
}

void check_metric_inputs(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        fail(Errc::length_mismatch, "metric inputs differ in length");
    }
    if (a.size() < 3) {
        fail(Errc::undefined_metric,
             "correlation needs at least 3 samples, got " +
                 std::to_string(a.size()));
    }
}

}  // namespace

double srcc(std::span<const double> pred, std::span<const double> truth) {
    check_metric_inputs(pred, truth);
    std::vector<double> rp = fractional_ranks(pred);
    std::vector<double> rt = fractional_ranks(truth);
    return pearson_checked(rp, rt);
}

double plcc(std::span<const double> pred, std::span<const double> truth) {
    check_metric_inputs(pred, truth);
    return pearson_checked(pred, truth);
}

SplitPlan make_folds(std::vector<std::string> ids, uint64_t seed) {
    size_t n = ids.size();
    if (n < 10) {
        fail(Errc::protocol, "split protocol needs n >= 10 labeled ids, got " +
                                 std::to_string(n));
    }
    {
        std::unordered_set<std::string> seen;
        for (const auto& id : ids) {
            if (!seen.insert(id).second) {
                fail(Errc::protocol, "duplicate id '" + id + "' in split input");
            }
        }
    }
    SplitPlan plan;
    plan.seed = seed;
    Rng shuffle_rng(derive_seed(seed, "fold-shuffle"));
    shuffle_rng.shuffle(ids);

    size_t base = n / SplitPlan::kFoldCount;
    size_t extra = n % SplitPlan::kFoldCount;
    size_t val_count = static_cast<size_t>(
        std::floor(0.1 * static_cast<double>(n) + 0.5));

    size_t cursor = 0;
    std::array<std::pair<size_t, size_t>, SplitPlan::kFoldCount> ranges;
    for (uint32_t f = 0; f < SplitPlan::kFoldCount; ++f) {
        size_t len = base + (f < extra ? 1 : 0);
        ranges[f] = {cursor, cursor + len};
        cursor += len;
    }

    for (uint32_t f = 0; f < SplitPlan::kFoldCount; ++f) {
        FoldSplit& fold = plan.folds[f];
        auto [lo, hi] = ranges[f];
        fold.train_ids.assign(ids.begin() + static_cast<ptrdiff_t>(lo),
                              ids.begin() + static_cast<ptrdiff_t>(hi));
        std::vector<std::string> rest;
        rest.reserve(n - (hi - lo));
        rest.insert(rest.end(), ids.begin(), ids.begin() + static_cast<ptrdiff_t>(lo));
        rest.insert(rest.end(), ids.begin() + static_cast<ptrdiff_t>(hi), ids.end());
        Rng rest_rng(derive_seed(seed, "valtest-shuffle", f));
        rest_rng.shuffle(rest);
        if (val_count >= rest.size()) {
            fail(Errc::protocol, "validation share leaves no test ids");
        }
        fold.val_ids.assign(rest.begin(),
                            rest.begin() + static_cast<ptrdiff_t>(val_count));
        fold.test_ids.assign(rest.begin() + static_cast<ptrdiff_t>(val_count),
                             rest.end());
    }
    return plan;
}

namespace {

SampleRow make_row(const Record& rec, const ContainerHeader& header,
                   const Prediction& pred) {
    SampleRow row;
    row.id = rec.id;
    row.q_b = pred.q_b;
    row.u_b = pred.u_b;
    row.delta = pred.delta;
    row.y_hat = pred.y_hat;
    row.labeled = rec.labeled();
    if (row.labeled) row.y = normalize_mos(rec.mos_raw, header);
    return row;
}

}  // namespace

std::vector<SampleRow> score_rows(const CalibParams<float>& params,
                                  const Container& data,
                                  const VerbalizerSet& vset) {
    std::vector<SampleRow> rows;
    rows.reserve(data.records.size());
    for (const Record& rec : data.records) {
        Prediction pred = forward(rec, judge(rec, vset), params);
        rows.push_back(make_row(rec, data.header, pred));
    }
    return rows;
}

MetricReport evaluate(const CalibParams<float>& params, const Container& data,
                      std::span<const std::string> ids,
                      const VerbalizerSet& vset) {
    MetricReport report;
    std::vector<double> yh, yv;
    yh.reserve(ids.size());
    yv.reserve(ids.size());
    for (const std::string& id : ids) {
        const Record& rec = data.find(id);
        if (!rec.labeled()) {
            fail(Errc::data, "record '" + id + "' is unlabeled; cannot evaluate");
        }
        Prediction pred = forward(rec, judge(rec, vset), params);
        SampleRow row = make_row(rec, data.header, pred);
        yh.push_back(row.y_hat);
        yv.push_back(row.y);
        report.mean_abs_delta += std::abs(row.delta);
        report.rows.push_back(std::move(row));
    }
    report.n = report.rows.size();
    if (report.n > 0) report.mean_abs_delta /= static_cast<double>(report.n);
    report.srcc = srcc(yh, yv);
    report.plcc = plcc(yh, yv);
    return report;
}

AnalyzeResult analyze(const CalibParams<float>& params, const Container& data,
                      std::span<const std::string> ids,
                      const VerbalizerSet& vset) {
    AnalyzeResult result;
    for (const std::string& id : ids) {
        const Record& rec = data.find(id);
        if (!rec.labeled()) {
            fail(Errc::data, "record '" + id + "' is unlabeled; cannot analyze");
        }
        Prediction pred = forward(rec, judge(rec, vset), params);
        result.rows.push_back(make_row(rec, data.header, pred));
    }

    for (const SampleRow& row : result.rows) {
        double err = row.y - row.q_b;
        int bin = static_cast<int>(std::floor((err + 1.0) / 0.1));
        bin = std::clamp(bin, 0, 19);
        result.hist[static_cast<size_t>(bin)] += 1;
    }

    std::vector<size_t> idx(result.rows.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
        return result.rows[a].q_b < result.rows[b].q_b;
    });
    size_t n = idx.size();
    for (size_t b = 0; b < 10; ++b) {
        size_t lo = b * n / 10;
        size_t hi = (b + 1) * n / 10;
        if (hi <= lo) continue;
        DecileBin bin;
        bin.n = hi - lo;
        for (size_t i = lo; i < hi; ++i) {
            const SampleRow& row = result.rows[idx[i]];
            bin.center += row.q_b;
            bin.mean_err += row.y - row.q_b;
        }
        bin.center /= static_cast<double>(bin.n);
        bin.mean_err /= static_cast<double>(bin.n);
        result.deciles.push_back(bin);
    }
    return result;
}

ProtocolResult run_protocol(const Container& data, const CalibConfig& model_cfg,
                            const TrainConfig& train_cfg, uint64_t user_seed,
                            const VerbalizerSet& vset, const EpochCallback& cb) {
    std::vector<std::string> ids = labeled_ids(data);
    SplitPlan plan = make_folds(ids, protocol_split_seed(user_seed));

    ProtocolResult result;
    for (uint32_t f = 0; f < SplitPlan::kFoldCount; ++f) {
        const FoldSplit& fold = plan.folds[f];
        ProtocolFold pf;
        pf.fold = f;
        if (model_cfg.mode == Mode::base_only) {
            CalibParams<float> params = CalibParams<float>::zeros(model_cfg);
            pf.report = evaluate(params, data, fold.test_ids, vset);
        } else {
            CalibParams<float> params =
                init_params<float>(model_cfg, protocol_init_seed(user_seed, f));
            TrainConfig cfg = train_cfg;
            cfg.seed = protocol_train_seed(user_seed, f);
            TrainResult tr =
                train(data, fold.train_ids, fold.val_ids, params, cfg, vset, cb);
            pf.best_epoch = tr.best_epoch;
            pf.best_val_srcc = tr.best_val_srcc;
            pf.report = evaluate(tr.best_params, data, fold.test_ids, vset);
        }
        result.mean_srcc += pf.report.srcc;
        result.mean_plcc += pf.report.plcc;
        result.folds.push_back(std::move(pf));
    }
    result.mean_srcc /= static_cast<double>(SplitPlan::kFoldCount);
    result.mean_plcc /= static_cast<double>(SplitPlan::kFoldCount);
    return result;
}

namespace {

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", x);
    return buf;
}

}  // namespace

std::string score_csv(std::span<const SampleRow> rows) {
    std::string out = "id,q_b,u_b,delta,y_hat,y\n";
    for (const SampleRow& r : rows) {
        out += r.id + ',' + fmt(r.q_b) + ',' + fmt(r.u_b) + ',' +
               fmt(r.delta) + ',' + fmt(r.y_hat) + ',' +
               (r.labeled ? fmt(r.y) : std::string()) + '\n';
    }
    return out;
}

std::string analyze_samples_csv(std::span<const SampleRow> rows) {
    std::string out = "id,q_b,y,y_minus_qb,delta,y_hat\n";
    for (const SampleRow& r : rows) {
        out += r.id + ',' + fmt(r.q_b) + ',' + fmt(r.y) + ',' +
               fmt(r.y - r.q_b) + ',' + fmt(r.delta) + ',' + fmt(r.y_hat) +
               '\n';
    }
    return out;
}

std::string analyze_hist_csv(const AnalyzeResult& r) {
    std::string out = "bin_lo,bin_hi,count\n";
    for (size_t b = 0; b < r.hist.size(); ++b) {
        double lo = -1.0 + 0.1 * static_cast<double>(b);
        out += fmt(lo) + ',' + fmt(lo + 0.1) + ',' +
               std::to_string(r.hist[b]) + '\n';
    }
    return out;
}

std::string analyze_deciles_csv(const AnalyzeResult& r) {
    std::string out = "decile,qb_center,mean_y_minus_qb,count\n";
    for (size_t b = 0; b < r.deciles.size(); ++b) {
        out += std::to_string(b) + ',' + fmt(r.deciles[b].center) + ',' +
               fmt(r.deciles[b].mean_err) + ',' +
               std::to_string(r.deciles[b].n) + '\n';
    }
    return out;
}

std::string protocol_tsv(const ProtocolResult& r) {
    std::string out = "fold\tn_test\tsrcc\tplcc\tmean_abs_delta\tbest_epoch\tval_srcc\n";
    for (const ProtocolFold& f : r.folds) {
        out += std::to_string(f.fold) + '\t' + std::to_string(f.report.n) +
               '\t' + fmt(f.report.srcc) + '\t' + fmt(f.report.plcc) + '\t' +
               fmt(f.report.mean_abs_delta) + '\t' +
               std::to_string(f.best_epoch) + '\t' + fmt(f.best_val_srcc) +
               '\n';
    }
    out += "mean\t\t" + fmt(r.mean_srcc) + '\t' + fmt(r.mean_plcc) + "\t\t\t\n";
    return out;
}

}  // namespace dpcvqa
