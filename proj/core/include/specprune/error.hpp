#pragma once

#include <stdexcept>
#include <string>

namespace specprune {

// Error categories map one-to-one onto CLI exit codes.
enum class Errc {
    usage = 1,       // bad arguments / flag combinations
    data = 2,        // malformed files, degenerate spectra, shape mismatches
    infeasible = 3,  // budget cannot be met
};

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string & msg) : std::runtime_error(msg), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void throw_usage(const std::string & msg) { throw Error(Errc::usage, msg); }
[[noreturn]] inline void throw_data(const std::string & msg) { throw Error(Errc::data, msg); }
[[noreturn]] inline void throw_infeasible(const std::string & msg) { throw Error(Errc::infeasible, msg); }

} // namespace specprune
