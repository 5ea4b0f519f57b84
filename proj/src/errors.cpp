#include "pumpsched/errors.hpp"

namespace pumpsched {

namespace {

std::string join_issues(const std::vector<std::string>& issues)
{
    std::string out = "validation failed";
    for (const auto& i : issues) {
        out += "\n  ";
        out += i;
    }
    return out;
}

} // namespace

ValidationError::ValidationError(std::vector<std::string> issues)
    : std::runtime_error(join_issues(issues)), issues_(std::move(issues))
{
}

} // namespace pumpsched
