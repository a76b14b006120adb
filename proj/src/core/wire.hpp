#pragma once

#include <algorithm>
#include <bit>
#include <cstring>
#include <string>
#include <type_traits>
#include <vector>

#include "core/error.hpp"

namespace dpcvqa {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms unsupported");

template <class T>
void put_le(std::string& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(std::begin(buf), std::end(buf));
    }
    out.append(reinterpret_cast<const char*>(buf), sizeof(T));
}

// Cursor over a fully loaded byte buffer; truncation errors carry the byte
// offset plus expected vs available lengths.
class WireReader {
public:
    WireReader(std::string bytes, std::string origin)
        : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

    size_t offset() const { return off_; }
    size_t remaining() const { return bytes_.size() - off_; }

    template <class T>
    T get_le(const char* what) {
        need(sizeof(T), what);
        unsigned char buf[sizeof(T)];
        std::memcpy(buf, bytes_.data() + off_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) {
            std::reverse(std::begin(buf), std::end(buf));
        }
        T v;
        std::memcpy(&v, buf, sizeof(T));
        off_ += sizeof(T);
        return v;
    }

    std::string get_bytes(size_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(off_, n);
        off_ += n;
        return s;
    }

    void get_f32(std::vector<float>& out, size_t n, const char* what) {
        out.resize(n);
        for (size_t i = 0; i < n; ++i) out[i] = get_le<float>(what);
    }

    void need(size_t n, const char* what) const {
        if (off_ + n > bytes_.size()) {
            fail(Errc::truncated,
                 origin_ + ": truncated while reading " + std::string(what) +
                     " at byte offset " + std::to_string(off_) +
                     ": expected " + std::to_string(n) + " more bytes, " +
                     std::to_string(bytes_.size() - off_) + " available");
        }
    }

private:
    std::string bytes_;
    std::string origin_;
    size_t off_ = 0;
};

std::string read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::string& bytes);

}  // namespace dpcvqa
