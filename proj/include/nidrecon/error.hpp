#ifndef NIDRECON_ERROR_HPP
#define NIDRECON_ERROR_HPP

#include <stdexcept>
#include <string>

namespace nidrecon {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// operands live on different grids or have incompatible shapes
struct DimensionError : Error {
    using Error::Error;
};

// invalid parameter value (non-positive threshold, bad schedule, ...)
struct ParameterError : Error {
    using Error::Error;
};

// argument outside the domain of a scalar function (e.g. negative s)
struct DomainError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

inline void require_same(int a, int b, const char* what)
{
    if (a != b)
        throw DimensionError(std::string(what) + ": " + std::to_string(a) + " != " + std::to_string(b));
}

} // namespace nidrecon

#endif
