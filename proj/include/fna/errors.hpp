#pragma once

#include <stdexcept>
#include <string>

namespace fna {

// Bad or inconsistent input data (files, schemas, references). CLI exit code 1.
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// A requested solve has no feasible answer. CLI exit code 2.
class InfeasibleError : public std::runtime_error {
public:
    explicit InfeasibleError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invariant breakage inside the toolkit itself. CLI exit code 3.
class InternalError : public std::runtime_error {
public:
    explicit InternalError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace fna
