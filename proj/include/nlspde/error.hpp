#pragma once

#include <stdexcept>
#include <string>

namespace nlspde {

enum class ErrorCode {
    InvalidArgument,
    Coefficient,
    SingularStep,
    NonFinite,
    Guard,
    NotAKnot,
    PathDependent,
    Singular,
    NeumannDivergence,
    Coercivity,
    Config,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
    if (!condition) throw Error(code, what);
}

}  // namespace nlspde
