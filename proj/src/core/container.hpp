#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "core/perception.hpp"

namespace dpcvqa {

// Fixed little-endian feature container, extension .dpcf.
//
// Header (40 bytes):
//   magic "DPCVQA01" | u32 version | u32 K | u32 d_m | u32 d_a |
//   u64 record_count | f32 mos_scale_lo | f32 mos_scale_hi
// Record:
//   u32 id_length | id bytes (UTF-8) | u32 N | u32 N_a | f32 mos_raw
//   | K f32 logits | N*d_m f32 visual tokens | N_a*d_a f32 aux tokens
// mos_raw NaN marks an unlabeled record.
struct ContainerHeader {
    static constexpr std::array<char, 8> kMagic = {'D', 'P', 'C', 'V',
                                                   'Q', 'A', '0', '1'};
    static constexpr uint32_t kVersion = 1;
    static constexpr size_t kByteSize = 40;

    uint32_t version = kVersion;
    uint32_t k = 0;
    uint32_t d_m = 0;
    uint32_t d_a = 0;
    uint64_t record_count = 0;
    float mos_lo = 0.0f;
    float mos_hi = 1.0f;

    void validate() const;
};

struct Container {
    ContainerHeader header;
    std::vector<Record> records;

    const Record& find(const std::string& id) const;
};

// Enforces every stored-record invariant against the header; each violation
// maps to its own error code.
void validate_record(const Record& record, const ContainerHeader& header);

void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path);

// (raw - lo) / (hi - lo), range-checked.
double normalize_mos(double mos_raw, const ContainerHeader& header);

std::vector<std::string> labeled_ids(const Container& c);

// --- synthetic data ------------------------------------------------------

struct SyntheticConfig {
    uint64_t record_count = 200;
    uint32_t k = 5;
    uint32_t d_m = 32;
    uint32_t d_a = 16;
    uint32_t n_vis = 8;
    uint32_t n_aux = 4;
    double noise_sigma = 0.01;
    uint64_t seed = 0;

    void validate() const;
};

// Planted residual: the part of the target MOS the base prior misses.
// |r| <= 0.125, representable under the default residual bound 0.2.
inline double planted_residual(double q_b, double token_signal) {
    return 0.15 * (0.5 - q_b) + 0.05 * std::tanh(token_signal);
}

// Deterministic generator. Base scores fall in coarse quality levels that
// span [0,1]; token features are i.i.d. standard normal; the label is
// y = clamp(q_b + planted_residual + noise, 0, 1) where the token signal is
// the projection of the mean visual token onto a seed-derived unit vector.
Container generate_synthetic(const SyntheticConfig& cfg);

}  // namespace dpcvqa
