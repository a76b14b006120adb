#include "core/container.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "core/wire.hpp"

namespace dpcvqa {

std::string read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(Errc::io, "cannot open '" + path + "'");
    return std::string((std::istreambuf_iterator<char>(f)),
                       std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(Errc::io, "cannot open '" + path + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) fail(Errc::io, "write failed for '" + path + "'");
}

void ContainerHeader::validate() const {
    if (version != kVersion) {
        fail(Errc::bad_version,
             "unsupported container version " + std::to_string(version));
    }
    if (k < 2) fail(Errc::invalid_argument, "container K must be >= 2");
    if (d_m < 1) fail(Errc::invalid_argument, "container d_m must be >= 1");
    if (!(mos_lo < mos_hi)) {
        fail(Errc::invalid_argument, "MOS scale requires lo < hi");
    }
}

const Record& Container::find(const std::string& id) const {
    for (const Record& r : records) {
        if (r.id == id) return r;
    }
    fail(Errc::data, "no record with id '" + id + "'");
}

void validate_record(const Record& r, const ContainerHeader& h) {
    if (r.n_vis < 1) {
        fail(Errc::invalid_argument, "record '" + r.id + "': N must be >= 1");
    }
    if (r.logits.size() != h.k) {
        fail(Errc::length_mismatch,
             "record '" + r.id + "': " + std::to_string(r.logits.size()) +
                 " logits, header K=" + std::to_string(h.k));
    }
    if (r.h_vis.size() != static_cast<size_t>(r.n_vis) * h.d_m) {
        fail(Errc::shape_mismatch,
             "record '" + r.id + "': visual token payload size " +
                 std::to_string(r.h_vis.size()) + " != N*d_m");
    }
    if (r.h_aux.size() != static_cast<size_t>(r.n_aux) * h.d_a) {
        fail(Errc::shape_mismatch,
             "record '" + r.id + "': aux token payload size " +
                 std::to_string(r.h_aux.size()) + " != N_a*d_a");
    }
    if (r.n_aux > 0 && h.d_a == 0) {
        fail(Errc::shape_mismatch,
             "record '" + r.id + "': aux tokens present but header d_a=0");
    }
    auto check_finite = [&](const std::vector<float>& v, const char* what) {
        for (float x : v) {
            if (!std::isfinite(x)) {
                fail(Errc::not_finite,
                     "record '" + r.id + "': non-finite value in " + what);
            }
        }
    };
    check_finite(r.logits, "logits");
    check_finite(r.h_vis, "visual tokens");
    check_finite(r.h_aux, "aux tokens");
    if (r.labeled()) {
        if (!std::isfinite(r.mos_raw)) {
            fail(Errc::not_finite, "record '" + r.id + "': non-finite MOS");
        }
        if (r.mos_raw < h.mos_lo || r.mos_raw > h.mos_hi) {
            fail(Errc::out_of_range,
                 "record '" + r.id + "': MOS " + std::to_string(r.mos_raw) +
                     " outside scale [" + std::to_string(h.mos_lo) + ", " +
                     std::to_string(h.mos_hi) + "]");
        }
    }
}

void write_container(const std::string& path, const Container& c) {
    ContainerHeader h = c.header;
    h.record_count = c.records.size();
    h.validate();
    for (const Record& r : c.records) validate_record(r, h);

    std::string out;
    out.append(h.kMagic.data(), h.kMagic.size());
    put_le<uint32_t>(out, h.version);
    put_le<uint32_t>(out, h.k);
    put_le<uint32_t>(out, h.d_m);
    put_le<uint32_t>(out, h.d_a);
    put_le<uint64_t>(out, h.record_count);
    put_le<float>(out, h.mos_lo);
    put_le<float>(out, h.mos_hi);
    for (const Record& r : c.records) {
        put_le<uint32_t>(out, static_cast<uint32_t>(r.id.size()));
        out.append(r.id);
        put_le<uint32_t>(out, r.n_vis);
        put_le<uint32_t>(out, r.n_aux);
        put_le<float>(out, r.mos_raw);
        for (float x : r.logits) put_le<float>(out, x);
        for (float x : r.h_vis) put_le<float>(out, x);
        for (float x : r.h_aux) put_le<float>(out, x);
    }
    write_file_bytes(path, out);
}

Container read_container(const std::string& path) {
    WireReader in(read_file_bytes(path), path);

    std::string magic = in.get_bytes(8, "magic");
    if (std::memcmp(magic.data(), ContainerHeader::kMagic.data(), 8) != 0) {
        fail(Errc::bad_magic, path + ": bad magic at byte offset 0");
    }
    Container c;
    c.header.version = in.get_le<uint32_t>("version");
    c.header.k = in.get_le<uint32_t>("K");
    c.header.d_m = in.get_le<uint32_t>("d_m");
    c.header.d_a = in.get_le<uint32_t>("d_a");
    c.header.record_count = in.get_le<uint64_t>("record_count");
    c.header.mos_lo = in.get_le<float>("mos_scale_lo");
    c.header.mos_hi = in.get_le<float>("mos_scale_hi");
    c.header.validate();

    c.records.reserve(c.header.record_count);
    for (uint64_t i = 0; i < c.header.record_count; ++i) {
        size_t rec_off = in.offset();
        Record r;
        uint32_t id_len = in.get_le<uint32_t>("id length");
        r.id = in.get_bytes(id_len, "id");
        r.n_vis = in.get_le<uint32_t>("N");
        r.n_aux = in.get_le<uint32_t>("N_a");
        r.mos_raw = in.get_le<float>("mos_raw");
        in.get_f32(r.logits, c.header.k, "logits");
        in.get_f32(r.h_vis, static_cast<size_t>(r.n_vis) * c.header.d_m,
                   "visual tokens");
        in.get_f32(r.h_aux, static_cast<size_t>(r.n_aux) * c.header.d_a,
                   "aux tokens");
        try {
            validate_record(r, c.header);
        } catch (const Error& e) {
            fail(e.code(), path + ": record " + std::to_string(i) +
                               " at byte offset " + std::to_string(rec_off) +
                               ": " + e.what());
        }
        c.records.push_back(std::move(r));
    }
    if (in.remaining() != 0) {
        fail(Errc::format, path + ": " + std::to_string(in.remaining()) +
                               " trailing bytes after last record");
    }
    return c;
}

double normalize_mos(double mos_raw, const ContainerHeader& h) {
    h.validate();
    if (!(mos_raw >= h.mos_lo && mos_raw <= h.mos_hi)) {
        fail(Errc::out_of_range,
             "MOS " + std::to_string(mos_raw) + " outside declared scale [" +
                 std::to_string(h.mos_lo) + ", " + std::to_string(h.mos_hi) +
                 "]");
    }
    return (mos_raw - h.mos_lo) /
           (static_cast<double>(h.mos_hi) - static_cast<double>(h.mos_lo));
}

std::vector<std::string> labeled_ids(const Container& c) {
    std::vector<std::string> ids;
    for (const Record& r : c.records) {
        if (r.labeled()) ids.push_back(r.id);
    }
    return ids;
}

}  // namespace dpcvqa
