#include "quest/error.hpp"

#include <fmt/format.h>

namespace quest {

namespace {

std::string format_location(std::string const & what, std::size_t line, std::string const & field)
{
    if (line == 0 && field.empty()) {
        return what;
    }
    if (field.empty()) {
        return fmt::format("line {}: {}", line, what);
    }
    if (line == 0) {
        return fmt::format("field '{}': {}", field, what);
    }
    return fmt::format("line {}, field '{}': {}", line, field, what);
}

} // namespace

FormatError::FormatError(std::string const & what, std::size_t line, std::string field)
    : Error(ErrorKind::Format, format_location(what, line, field)), line_(line), field_(std::move(field))
{}

int exit_code_for(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::Usage: return 2;
    case ErrorKind::Stage: return 3;
    case ErrorKind::Backend: return 4;
    default: return 1;
    }
}

} // namespace quest
