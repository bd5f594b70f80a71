#pragma once

#include <stdexcept>
#include <string>

namespace uavafl {

// Error taxonomy used across the library. All conditions that abort an
// operation throw one of these; the CLI maps them to machine-readable
// "error: <category>: <message>" lines.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(category + ": " + message), category_(std::move(category)) {}
    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& m) : Error("config", m) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& m) : Error("shape", m) {}
};

class SingularityError : public Error {
public:
    explicit SingularityError(const std::string& m) : Error("singularity", m) {}
};

class SchedulingError : public Error {
public:
    explicit SchedulingError(const std::string& m) : Error("scheduling", m) {}
};

class InfeasibleError : public Error {
public:
    explicit InfeasibleError(const std::string& m) : Error("infeasible", m) {}
};

class SolverError : public Error {
public:
    explicit SolverError(const std::string& m) : Error("solver", m) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& m) : Error("io", m) {}
};

}  // namespace uavafl
