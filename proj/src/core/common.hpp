#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tgi {

// Error categories map 1:1 onto CLI exit codes and C API status values.
enum class ErrorCode : int {
    validation = 2,
    io = 3,
    insufficient_stats = 4,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail_validation(const std::string& msg) {
    throw Error(ErrorCode::validation, msg);
}
[[noreturn]] inline void fail_io(const std::string& msg) {
    throw Error(ErrorCode::io, msg);
}
[[noreturn]] inline void fail_insufficient(const std::string& msg) {
    throw Error(ErrorCode::insufficient_stats, msg);
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) fail_validation(msg);
}

}  // namespace tgi
