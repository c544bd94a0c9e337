#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace quest {

enum class ErrorKind
{
    Usage,     // bad flags, bad config values
    Format,    // malformed input file or record
    Stage,     // pipeline stage precondition not met
    Backend,   // LLM backend auth/config failure
    Runner,    // execution pool unavailable
    Io,
};

class Error : public std::runtime_error
{
public:
    Error(ErrorKind kind, std::string const & what)
        : std::runtime_error(what), kind_(kind)
    {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class UsageError : public Error
{
public:
    explicit UsageError(std::string const & what) : Error(ErrorKind::Usage, what) {}
};

/// Malformed input. `line` is 1-based, 0 when not tied to a line.
class FormatError : public Error
{
public:
    FormatError(std::string const & what, std::size_t line = 0, std::string field = {});

    [[nodiscard]] std::size_t line() const noexcept { return line_; }
    [[nodiscard]] std::string const & field() const noexcept { return field_; }

private:
    std::size_t line_;
    std::string field_;
};

class StageError : public Error
{
public:
    explicit StageError(std::string const & what) : Error(ErrorKind::Stage, what) {}
};

class BackendError : public Error
{
public:
    explicit BackendError(std::string const & what) : Error(ErrorKind::Backend, what) {}
};

class RunnerError : public Error
{
public:
    explicit RunnerError(std::string const & what) : Error(ErrorKind::Runner, what) {}
};

class IoError : public Error
{
public:
    explicit IoError(std::string const & what) : Error(ErrorKind::Io, what) {}
};

/// Process exit code for an error kind: 2 usage, 3 stage precondition, 4 backend, 1 otherwise.
int exit_code_for(ErrorKind kind) noexcept;

} // namespace quest
