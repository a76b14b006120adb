// dpc — command-line front end for the dpcvqa shared library.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dpcvqa/dpcvqa.h"

namespace {

enum class LogLevel { silent = 0, info = 1, debug = 2 };

LogLevel log_level() {
    const char* env = std::getenv("DPC_LOG");
    if (!env) return LogLevel::info;
    std::string v = env;
    if (v == "silent" || v == "quiet" || v == "0") return LogLevel::silent;
    if (v == "debug" || v == "2") return LogLevel::debug;
    return LogLevel::info;
}

void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::debug) {
        std::fprintf(stderr, "dpc: %s\n", msg.c_str());
    }
}

int report_failure(dpcvqa_status st) {
    std::fprintf(stderr, "dpc: error (%s): %s\n", dpcvqa_status_name(st),
                 dpcvqa_last_error());
    return 1;
}

#define CHECK_API(call)                  \
    do {                                 \
        dpcvqa_status st_ = (call);      \
        if (st_ != DPCVQA_OK) {          \
            return report_failure(st_);  \
        }                                \
    } while (0)

struct ContainerHandle {
    dpcvqa_container* ptr = nullptr;
    ~ContainerHandle() { dpcvqa_container_free(ptr); }
};

struct ModelHandle {
    dpcvqa_model* ptr = nullptr;
    ~ModelHandle() { dpcvqa_model_free(ptr); }
};

struct OwnedString {
    char* ptr = nullptr;
    ~OwnedString() { dpcvqa_string_free(ptr); }
};

const std::map<std::string, int32_t> kModeMap = {
    {"base_only", DPCVQA_MODE_BASE_ONLY},
    {"direct", DPCVQA_MODE_DIRECT},
    {"score_cond", DPCVQA_MODE_SCORE_COND},
    {"residual", DPCVQA_MODE_RESIDUAL},
};

// Shared tunables; CLI flags override config-file values override these
// defaults (CLI11's config handling implements the precedence).
struct Options {
    std::string data;
    std::string out;
    std::string checkpoint;
    std::string log_file;
    std::string mode = "residual";
    std::string anchors;
    uint32_t fold = 0;
    uint64_t seed = 0;
    uint32_t d = 2048;
    uint32_t queries = 8;
    uint32_t heads = 1;
    double alpha = 0.2;
    double lambda_res = 0.05;
    uint32_t epochs = 30;
    uint32_t batch = 8;
    double lr = 1e-4;
    double weight_decay = 1e-4;
    uint64_t records = 200;
    double noise = 0.01;
    uint32_t gen_k = 5;
    uint32_t gen_dm = 32;
    uint32_t gen_da = 16;
    uint32_t gen_n = 8;
    uint32_t gen_na = 4;
    bool protocol = false;
    bool corrupt = false;
};

void add_config(CLI::App* cmd) {
    cmd->set_config("--config", "", "flat key = value config file");
}

void add_model_flags(CLI::App* cmd, Options& o) {
    cmd->add_option("--mode", o.mode, "variant mode")
        ->check(CLI::IsMember({"base_only", "direct", "score_cond", "residual"}));
    cmd->add_option("--d", o.d, "shared latent dimension");
    cmd->add_option("--queries", o.queries, "calibration query count M");
    cmd->add_option("--heads", o.heads, "attention heads (must divide d)");
    cmd->add_option("--alpha", o.alpha, "residual bound")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--anchors", o.anchors,
                    "comma-separated verbalizer anchors, overrides the "
                    "equally spaced default");
}

void add_train_flags(CLI::App* cmd, Options& o) {
    cmd->add_option("--lambda-res", o.lambda_res,
                    "residual regularization coefficient")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--epochs", o.epochs, "training epochs");
    cmd->add_option("--batch", o.batch, "batch size")
        ->check(CLI::Range(1u, 1u << 20));
    cmd->add_option("--lr", o.lr, "learning rate")->check(CLI::PositiveNumber);
    cmd->add_option("--weight-decay", o.weight_decay, "decoupled weight decay")
        ->check(CLI::NonNegativeNumber);
}

std::vector<double> parse_anchors(const std::string& text) {
    std::vector<double> out;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t next = text.find(',', pos);
        if (next == std::string::npos) next = text.size();
        std::string tok = text.substr(pos, next - pos);
        if (!tok.empty()) {
            size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) {
                throw CLI::ValidationError("--anchors",
                                           "bad anchor value '" + tok + "'");
            }
        }
        pos = next + 1;
    }
    return out;
}

dpcvqa_train_config make_train_config(const Options& o) {
    dpcvqa_train_config tc;
    dpcvqa_train_config_init(&tc);
    tc.learning_rate = o.lr;
    tc.weight_decay = o.weight_decay;
    tc.batch_size = o.batch;
    tc.epochs = o.epochs;
    tc.lambda_res = o.lambda_res;
    tc.seed = o.seed;
    return tc;
}

dpcvqa_model_config make_model_config(const Options& o) {
    dpcvqa_model_config mc;
    dpcvqa_model_config_init(&mc);
    mc.d = o.d;
    mc.queries = o.queries;
    mc.heads = o.heads;
    mc.alpha = o.alpha;
    mc.mode = kModeMap.at(o.mode);
    return mc;
}

int apply_anchors_and_heads(ModelHandle& model, const Options& o,
                            bool heads_from_flag) {
    if (!o.anchors.empty()) {
        std::vector<double> anchors = parse_anchors(o.anchors);
        CHECK_API(dpcvqa_model_set_anchors(model.ptr, anchors.data(),
                                           static_cast<uint32_t>(anchors.size())));
    }
    if (heads_from_flag) {
        CHECK_API(dpcvqa_model_set_heads(model.ptr, o.heads));
    }
    return 0;
}

// Opens --checkpoint when given, otherwise builds a fresh model (zeros for
// base_only, seeded init otherwise) with dims from the container.
int load_or_create_model(const Options& o, const ContainerHandle& data,
                         bool heads_from_flag, ModelHandle& model) {
    if (!o.checkpoint.empty()) {
        log_debug("loading checkpoint " + o.checkpoint);
        CHECK_API(dpcvqa_model_open(o.checkpoint.c_str(), &model.ptr));
    } else {
        dpcvqa_model_config mc = make_model_config(o);
        CHECK_API(dpcvqa_model_create(
            &mc, data.ptr, dpcvqa_derive_seed(o.seed, "init", o.fold),
            &model.ptr));
    }
    return apply_anchors_and_heads(model, o, heads_from_flag);
}

int write_text(const std::string& path, const char* text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        std::fprintf(stderr, "dpc: cannot open '%s' for writing\n",
                     path.c_str());
        return 1;
    }
    f << text;
    return f ? 0 : 1;
}

struct EpochPrinter {
    std::ofstream log;
    bool to_stdout = true;

    static void callback(uint32_t epoch, double train_loss,
                         double mean_abs_delta, double val_srcc,
                         double val_plcc, void* user) {
        auto* self = static_cast<EpochPrinter*>(user);
        char line[160];
        std::snprintf(line, sizeof(line), "%u\t%.9g\t%.9g\t%.9g\t%.9g\n",
                      epoch, train_loss, mean_abs_delta, val_srcc, val_plcc);
        if (self->to_stdout) std::fputs(line, stdout);
        if (self->log.is_open()) self->log << line;
    }
};

// --- subcommands ---------------------------------------------------------------

int cmd_gen(const Options& o) {
    dpcvqa_synth_config sc;
    dpcvqa_synth_config_init(&sc);
    sc.record_count = o.records;
    sc.noise_sigma = o.noise;
    sc.seed = o.seed;
    sc.k = o.gen_k;
    sc.d_m = o.gen_dm;
    sc.d_a = o.gen_da;
    sc.n_vis = o.gen_n;
    sc.n_aux = o.gen_na;
    ContainerHandle c;
    CHECK_API(dpcvqa_container_generate(&sc, &c.ptr));
    CHECK_API(dpcvqa_container_save(c.ptr, o.out.c_str()));
    std::printf("container=%s\nrecords=%llu\nseed=%llu\n", o.out.c_str(),
                static_cast<unsigned long long>(o.records),
                static_cast<unsigned long long>(o.seed));
    return 0;
}

int cmd_inspect(const Options& o) {
    ContainerHandle c;
    CHECK_API(dpcvqa_container_open(o.data.c_str(), &c.ptr));
    dpcvqa_container_info info;
    CHECK_API(dpcvqa_container_info_get(c.ptr, &info));
    std::printf("container=%s\nversion=%u\nk=%u\nd_m=%u\nd_a=%u\n"
                "records=%llu\nlabeled=%llu\nmos_lo=%g\nmos_hi=%g\nstatus=ok\n",
                o.data.c_str(), info.version, info.k, info.d_m, info.d_a,
                static_cast<unsigned long long>(info.record_count),
                static_cast<unsigned long long>(info.labeled_count),
                static_cast<double>(info.mos_lo),
                static_cast<double>(info.mos_hi));
    return 0;
}

int cmd_train(const Options& o, bool heads_from_flag) {
    ContainerHandle data;
    CHECK_API(dpcvqa_container_open(o.data.c_str(), &data.ptr));
    ModelHandle model;
    if (int rc = load_or_create_model(o, data, heads_from_flag, model)) {
        return rc;
    }
    EpochPrinter printer;
    if (!o.log_file.empty()) {
        printer.log.open(o.log_file, std::ios::trunc);
        if (!printer.log) {
            std::fprintf(stderr, "dpc: cannot open log file '%s'\n",
                         o.log_file.c_str());
            return 1;
        }
    }
    dpcvqa_train_config tc = make_train_config(o);
    CHECK_API(dpcvqa_train_fold(model.ptr, data.ptr, &tc, o.fold,
                                EpochPrinter::callback, &printer));
    CHECK_API(dpcvqa_model_save(model.ptr, o.out.c_str()));

    dpcvqa_metrics val;
    CHECK_API(dpcvqa_evaluate_fold(model.ptr, data.ptr, o.seed, o.fold,
                                   DPCVQA_POOL_VAL, &val, nullptr));
    std::printf("checkpoint=%s\nfold=%u\nval_srcc=%.9g\nval_plcc=%.9g\n",
                o.out.c_str(), o.fold, val.srcc, val.plcc);
    return 0;
}

int cmd_eval(const Options& o, bool heads_from_flag) {
    ContainerHandle data;
    CHECK_API(dpcvqa_container_open(o.data.c_str(), &data.ptr));

    if (o.protocol) {
        ModelHandle model;
        if (int rc = load_or_create_model(o, data, heads_from_flag, model)) {
            return rc;
        }
        dpcvqa_train_config tc = make_train_config(o);
        dpcvqa_metrics mean;
        OwnedString table;
        CHECK_API(dpcvqa_run_protocol(model.ptr, data.ptr, &tc, &mean,
                                      &table.ptr));
        std::fputs(table.ptr, stdout);
        if (!o.out.empty() && write_text(o.out, table.ptr)) return 1;
        return 0;
    }

    ModelHandle model;
    if (int rc = load_or_create_model(o, data, heads_from_flag, model)) {
        return rc;
    }
    dpcvqa_metrics m;
    OwnedString csv;
    CHECK_API(dpcvqa_evaluate_fold(model.ptr, data.ptr, o.seed, o.fold,
                                   DPCVQA_POOL_TEST, &m,
                                   o.out.empty() ? nullptr : &csv.ptr));
    if (!o.out.empty() && write_text(o.out, csv.ptr)) return 1;
    std::printf("fold=%u\nn=%llu\nsrcc=%.9g\nplcc=%.9g\nmean_abs_delta=%.9g\n",
                o.fold, static_cast<unsigned long long>(m.n), m.srcc, m.plcc,
                m.mean_abs_delta);
    return 0;
}

int cmd_score(const Options& o, bool heads_from_flag) {
    ContainerHandle data;
    CHECK_API(dpcvqa_container_open(o.data.c_str(), &data.ptr));
    ModelHandle model;
    if (int rc = load_or_create_model(o, data, heads_from_flag, model)) {
        return rc;
    }
    OwnedString csv;
    CHECK_API(dpcvqa_score_csv(model.ptr, data.ptr, &csv.ptr));
    if (!o.out.empty()) return write_text(o.out, csv.ptr);
    std::fputs(csv.ptr, stdout);
    return 0;
}

int cmd_analyze(const Options& o, bool heads_from_flag) {
    ContainerHandle data;
    CHECK_API(dpcvqa_container_open(o.data.c_str(), &data.ptr));
    ModelHandle model;
    if (int rc = load_or_create_model(o, data, heads_from_flag, model)) {
        return rc;
    }
    OwnedString samples, hist, deciles;
    CHECK_API(dpcvqa_analyze(model.ptr, data.ptr, &samples.ptr, &hist.ptr,
                             &deciles.ptr));
    if (!o.out.empty()) {
        if (write_text(o.out + "_samples.csv", samples.ptr) ||
            write_text(o.out + "_hist.csv", hist.ptr) ||
            write_text(o.out + "_deciles.csv", deciles.ptr)) {
            return 1;
        }
        std::printf("samples=%s_samples.csv\nhist=%s_hist.csv\n"
                    "deciles=%s_deciles.csv\n",
                    o.out.c_str(), o.out.c_str(), o.out.c_str());
        return 0;
    }
    std::printf("# samples\n%s\n# histogram\n%s\n# deciles\n%s", samples.ptr,
                hist.ptr, deciles.ptr);
    return 0;
}

int cmd_fdcheck(const Options& o) {
    double max_err = 0;
    OwnedString report;
    CHECK_API(dpcvqa_fd_check(o.seed, o.corrupt ? 1 : 0, &max_err,
                              &report.ptr));
    std::fputs(report.ptr, stdout);
    std::printf("max_rel_err=%.3e\n", max_err);
    if (max_err > 1e-4) {
        std::fprintf(stderr, "dpc: gradient check failed (%.3e > 1e-4)\n",
                     max_err);
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dpc — decoupled perception / residual-calibration VQA toolkit"};
    app.require_subcommand(1);
    Options o;

    CLI::App* gen = app.add_subcommand("gen", "generate a synthetic .dpcf container");
    add_config(gen);
    gen->add_option("--records", o.records, "record count")
        ->check(CLI::Range(uint64_t{1}, uint64_t{100000000}));
    gen->add_option("--noise", o.noise, "label noise sigma")
        ->check(CLI::NonNegativeNumber);
    gen->add_option("--seed", o.seed, "seed");
    gen->add_option("--out", o.out, "output path")->required();
    gen->add_option("--k", o.gen_k, "verbalizer count");
    gen->add_option("--dm", o.gen_dm, "visual token dimension");
    gen->add_option("--da", o.gen_da, "aux token dimension");
    gen->add_option("--n", o.gen_n, "visual tokens per record");
    gen->add_option("--na", o.gen_na, "aux tokens per record");

    CLI::App* inspect = app.add_subcommand("inspect", "validate a container and print its header");
    add_config(inspect);
    inspect->add_option("--data", o.data, "container path")->required();

    CLI::App* train = app.add_subcommand("train", "train on one few-shot fold, write a checkpoint");
    add_config(train);
    train->add_option("--data", o.data, "container path")->required();
    train->add_option("--out", o.out, "checkpoint output path")->required();
    train->add_option("--checkpoint", o.checkpoint, "resume from checkpoint");
    train->add_option("--fold", o.fold, "fold index")->check(CLI::Range(0u, 4u));
    train->add_option("--seed", o.seed, "seed");
    train->add_option("--log", o.log_file, "epoch log file");
    add_model_flags(train, o);
    add_train_flags(train, o);

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint or run the 5-fold protocol");
    add_config(eval);
    eval->add_option("--data", o.data, "container path")->required();
    eval->add_option("--checkpoint", o.checkpoint, "checkpoint path");
    eval->add_option("--fold", o.fold, "fold index")->check(CLI::Range(0u, 4u));
    eval->add_option("--seed", o.seed, "seed");
    eval->add_option("--out", o.out, "write per-sample CSV / protocol table here");
    eval->add_flag("--protocol", o.protocol, "train and evaluate all 5 folds");
    add_model_flags(eval, o);
    add_train_flags(eval, o);

    CLI::App* score = app.add_subcommand("score", "per-video scores, labeled or not");
    add_config(score);
    score->add_option("--data", o.data, "container path")->required();
    score->add_option("--checkpoint", o.checkpoint, "checkpoint path");
    score->add_option("--seed", o.seed, "seed");
    score->add_option("--out", o.out, "output CSV path");
    add_model_flags(score, o);

    CLI::App* analyze = app.add_subcommand("analyze", "residual diagnostics tables");
    add_config(analyze);
    analyze->add_option("--data", o.data, "container path")->required();
    analyze->add_option("--checkpoint", o.checkpoint, "checkpoint path");
    analyze->add_option("--seed", o.seed, "seed");
    analyze->add_option("--out", o.out, "output file prefix");
    add_model_flags(analyze, o);

    CLI::App* fdcheck = app.add_subcommand("fdcheck", "finite-difference gradient verification");
    add_config(fdcheck);
    fdcheck->add_option("--seed", o.seed, "seed");
    fdcheck->add_flag("--corrupt", o.corrupt,
                      "corrupt one gradient coordinate (self-test)");

    CLI11_PARSE(app, argc, argv);

    // Cross-flag validation happens here, before any input file is opened.
    if (train->parsed() && o.mode == "base_only") {
        std::fprintf(stderr,
                     "dpc: --mode base_only has nothing to train\n");
        return 1;
    }
    if (eval->parsed() && !o.protocol && o.checkpoint.empty() &&
        o.mode != "base_only") {
        std::fprintf(stderr,
                     "dpc: eval needs --checkpoint, --protocol, or "
                     "--mode base_only\n");
        return 1;
    }

    auto heads_flag = [](CLI::App* cmd) {
        return cmd->count("--heads") > 0;
    };

    if (gen->parsed()) return cmd_gen(o);
    if (inspect->parsed()) return cmd_inspect(o);
    if (train->parsed()) return cmd_train(o, heads_flag(train));
    if (eval->parsed()) return cmd_eval(o, heads_flag(eval));
    if (score->parsed()) return cmd_score(o, heads_flag(score));
    if (analyze->parsed()) return cmd_analyze(o, heads_flag(analyze));
    if (fdcheck->parsed()) return cmd_fdcheck(o);
    return 0;
}
