#pragma once

#include <stdexcept>
#include <string>

namespace switsyn {

// Error taxonomy mirrors the CLI exit codes.
enum class ErrorKind {
    Parse,       // malformed input documents, bad matrix literals   -> exit 2
    Validation,  // structurally sound but semantically invalid      -> exit 1
    Infeasible,  // certified infeasible program                     -> exit 3
    Solver,      // numerical failure, uncertifiable result          -> exit 4
    Divergence,  // state norm blow-up during integration            -> exit 5
    Internal,    // broken invariant; a bug, not a user error
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message)
        : std::runtime_error(std::move(message)), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

    [[nodiscard]] int exit_code() const noexcept {
        switch (kind_) {
            case ErrorKind::Validation: return 1;
            case ErrorKind::Parse: return 2;
            case ErrorKind::Infeasible: return 3;
            case ErrorKind::Solver: return 4;
            case ErrorKind::Divergence: return 5;
            case ErrorKind::Internal: return 70;
        }
        return 70;
    }

private:
    ErrorKind kind_;
};

}  // namespace switsyn
