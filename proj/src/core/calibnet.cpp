#include "core/calibnet.hpp"

#include <cstring>

#include "core/wire.hpp"

namespace dpcvqa {

void CalibConfig::validate() const {
    if (d < 1) fail(Errc::invalid_argument, "d must be >= 1");
    if (d_m < 1) fail(Errc::invalid_argument, "d_m must be >= 1");
    if (m < 1) fail(Errc::invalid_argument, "M must be >= 1");
    if (k < 2) fail(Errc::invalid_argument, "K must be >= 2");
    if (heads < 1 || d % heads != 0) {
        fail(Errc::invalid_argument, "heads must be >= 1 and divide d");
    }
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
        fail(Errc::invalid_argument, "alpha must be finite and > 0");
    }
}

const char* mode_name(Mode m) {
    switch (m) {
        case Mode::base_only:            return "base_only";
        case Mode::direct_regression:    return "direct";
        case Mode::score_conditioned:    return "score_cond";
        case Mode::residual_calibration: return "residual";
    }
    return "unknown";
}

Mode mode_from_name(std::string_view name) {
    if (name == "base_only") return Mode::base_only;
    if (name == "direct" || name == "direct_regression") {
        return Mode::direct_regression;
    }
    if (name == "score_cond" || name == "score_conditioned") {
        return Mode::score_conditioned;
    }
    if (name == "residual" || name == "residual_calibration") {
        return Mode::residual_calibration;
    }
    fail(Errc::invalid_argument, "unknown mode '" + std::string(name) + "'");
}

size_t expected_parameter_count(uint32_t d, uint32_t d_m, uint32_t d_a,
                                uint32_t m) {
    size_t sd = d;
    return sd * d_m + sd + sd * d_a + sd + static_cast<size_t>(m) * sd +
           3 * sd * sd + 2 * (2 * sd + sd) + 2 * (sd + 1) + sd;
}

namespace {
constexpr char kCkptMagic[8] = {'D', 'P', 'C', 'C', 'K', 'P', 'T', '1'};
}

void save_checkpoint(const std::string& path, const CalibParams<float>& params,
                     const CheckpointMeta& meta) {
    std::string out;
    out.append(kCkptMagic, 8);
    put_le<uint32_t>(out, params.cfg.d);
    put_le<uint32_t>(out, params.cfg.d_m);
    put_le<uint32_t>(out, params.cfg.d_a);
    put_le<uint32_t>(out, params.cfg.m);
    put_le<uint32_t>(out, params.cfg.k);
    put_le<float>(out, static_cast<float>(params.cfg.alpha));
    put_le<uint32_t>(out, static_cast<uint32_t>(params.cfg.mode));
    put_le<uint64_t>(out, meta.step);
    put_le<float>(out, meta.val_srcc);
    for (const auto& t : params.tensors()) {
        for (size_t i = 0; i < t.size; ++i) put_le<float>(out, t.data[i]);
    }
    write_file_bytes(path, out);
}

std::pair<CalibParams<float>, CheckpointMeta> load_checkpoint(
    const std::string& path) {
    WireReader in(read_file_bytes(path), path);
    std::string magic = in.get_bytes(8, "magic");
    if (std::memcmp(magic.data(), kCkptMagic, 8) != 0) {
        fail(Errc::bad_magic, path + ": bad checkpoint magic at byte offset 0");
    }
    CalibConfig cfg;
    cfg.d = in.get_le<uint32_t>("d");
    cfg.d_m = in.get_le<uint32_t>("d_m");
    cfg.d_a = in.get_le<uint32_t>("d_a");
    cfg.m = in.get_le<uint32_t>("M");
    cfg.k = in.get_le<uint32_t>("K");
    cfg.alpha = in.get_le<float>("alpha");
    uint32_t mode = in.get_le<uint32_t>("mode");
    if (mode > static_cast<uint32_t>(Mode::residual_calibration)) {
        fail(Errc::format, path + ": unknown mode tag " + std::to_string(mode));
    }
    cfg.mode = static_cast<Mode>(mode);
    CheckpointMeta meta;
    meta.step = in.get_le<uint64_t>("step");
    meta.val_srcc = in.get_le<float>("val_srcc");

    CalibParams<float> params = CalibParams<float>::zeros(cfg);
    for (auto& t : params.tensors()) {
        for (size_t i = 0; i < t.size; ++i) {
            float x = in.get_le<float>(t.name);
            if (!std::isfinite(x)) {
                fail(Errc::not_finite, path + ": non-finite value in tensor " +
                                           std::string(t.name));
            }
            t.data[i] = x;
        }
    }
    if (in.remaining() != 0) {
        fail(Errc::format, path + ": " + std::to_string(in.remaining()) +
                               " trailing bytes after tensors");
    }
    return {std::move(params), meta};
}

}  // namespace dpcvqa
