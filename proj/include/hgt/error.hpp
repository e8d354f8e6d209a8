#pragma once

#include <stdexcept>
#include <string>

namespace hgt {

// Exit-code buckets used by the CLI: 2 config, 3 data, 4 numeric.
enum class ErrorCode { config = 2, data = 3, numeric = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string kind, const std::string& msg)
        : std::runtime_error(kind + ": " + msg), code_(code), kind_(std::move(kind)) {}

    ErrorCode code() const { return code_; }
    const std::string& kind() const { return kind_; }

    static Error config(std::string kind, const std::string& msg) {
        return Error(ErrorCode::config, std::move(kind), msg);
    }
    static Error data(std::string kind, const std::string& msg) {
        return Error(ErrorCode::data, std::move(kind), msg);
    }
    static Error numeric(std::string kind, const std::string& msg) {
        return Error(ErrorCode::numeric, std::move(kind), msg);
    }

private:
    ErrorCode code_;
    std::string kind_;
};

}  // namespace hgt
