#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "quest/io.hpp"

namespace quest {

/// Versioned prompt text with named `{{placeholder}}` slots.
struct PromptTemplate
{
    std::string id;
    std::string text;

    /// Placeholder names in order of first appearance.
    [[nodiscard]] std::vector<std::string> placeholders() const;
};

namespace template_ids {
inline constexpr std::string_view kConceptExtract = "concept-extract-v1";
inline constexpr std::string_view kProblemGenerate = "problem-generate-v1";
inline constexpr std::string_view kTestInputGenerate = "test-input-generate-v1";
inline constexpr std::string_view kSolutionGenerate = "solution-generate-v1";
} // namespace template_ids

/// Substitutes every placeholder. Throws FormatError naming the first
/// placeholder without a value.
std::string fill_template(PromptTemplate const & tmpl, std::map<std::string, std::string> const & values);

/// Built-in templates, optionally overridden by `<dir>/<id>.txt` files.
class TemplateRegistry
{
public:
    TemplateRegistry();
    explicit TemplateRegistry(std::optional<fs::path> const & override_dir);

    /// Throws UsageError for unknown ids.
    [[nodiscard]] PromptTemplate const & get(std::string_view id) const;
    void put(PromptTemplate tmpl);
    [[nodiscard]] std::vector<std::string> ids() const;

private:
    std::map<std::string, PromptTemplate, std::less<>> templates_;
};

} // namespace quest
