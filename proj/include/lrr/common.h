// common.h — error type and small checking helpers used across the library.
#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lrr {

class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline void append_parts(std::ostringstream&) {}
template <typename T, typename... Rest>
void append_parts(std::ostringstream& os, const T& v, const Rest&... rest) {
    os << v;
    append_parts(os, rest...);
}
}  // namespace detail

template <typename... Parts>
std::string msg(const Parts&... parts) {
    std::ostringstream os;
    detail::append_parts(os, parts...);
    return os.str();
}

template <typename... Parts>
[[noreturn]] void fail(const Parts&... parts) {
    throw Error(msg(parts...));
}

template <typename... Parts>
void check(bool cond, const Parts&... parts) {
    if (!cond) {
        fail(parts...);
    }
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

}  // namespace lrr
