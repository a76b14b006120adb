#pragma once

#include <stdexcept>
#include <string>

namespace dpcvqa {

enum class Errc {
    invalid_argument = 1,
    shape_mismatch,
    length_mismatch,
    not_finite,
    out_of_range,
    bad_magic,
    bad_version,
    truncated,
    format,
    io,
    numeric,
    undefined_metric,
    protocol,
    data,
};

class Error : public std::runtime_error {
public:
    Error(Errc code, std::string msg)
        : std::runtime_error(std::move(msg)), code_(code) {}
    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) {
    throw Error(code, msg);
}

inline const char* errc_name(Errc c) {
    switch (c) {
        case Errc::invalid_argument: return "invalid_argument";
        case Errc::shape_mismatch:   return "shape_mismatch";
        case Errc::length_mismatch:  return "length_mismatch";
        case Errc::not_finite:       return "not_finite";
        case Errc::out_of_range:     return "out_of_range";
        case Errc::bad_magic:        return "bad_magic";
        case Errc::bad_version:      return "bad_version";
        case Errc::truncated:        return "truncated";
        case Errc::format:           return "format";
        case Errc::io:               return "io";
        case Errc::numeric:          return "numeric";
        case Errc::undefined_metric: return "undefined_metric";
        case Errc::protocol:         return "protocol";
        case Errc::data:             return "data";
    }
    return "unknown";
}

}  // namespace dpcvqa
