#ifndef NIDRECON_NUMBER_FORMAT_HPP
#define NIDRECON_NUMBER_FORMAT_HPP

#include <charconv>
#include <cmath>
#include <string>

namespace nidrecon {

/// Shortest text that parses back to the same double; "nan", "inf", "-inf"
/// for the non-finite values.
inline std::string format_double(double x)
{
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

} // namespace nidrecon

#endif
