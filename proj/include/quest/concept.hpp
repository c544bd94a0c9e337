#pragma once

#include <compare>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace quest {

enum class ConceptKind : unsigned char
{
    Topic,
    KnowledgePoint,
};

std::string_view to_string(ConceptKind kind) noexcept;
ConceptKind concept_kind_from_string(std::string_view s);

/// Lowercase (ASCII), trim, collapse internal whitespace runs to one space.
/// No stemming: "sorting" and "sorted containers" stay distinct.
std::string normalize_concept_name(std::string_view raw);

/// A normalized concept. Identity is (kind, name); topics order before
/// knowledge points.
struct Concept
{
    ConceptKind kind = ConceptKind::Topic;
    std::string name;

    /// Normalizes `raw`; throws FormatError if the result is empty.
    static Concept make(ConceptKind kind, std::string_view raw);

    friend auto operator<=>(Concept const &, Concept const &) = default;
    friend bool operator==(Concept const &, Concept const &) = default;
};

using ConceptCombination = std::set<Concept>;

/// Topics and knowledge points extracted from one problem.
class ConceptSet
{
public:
    /// Inserts a normalized concept; returns false for duplicates and for
    /// names that normalize to empty.
    bool add(ConceptKind kind, std::string_view raw);

    [[nodiscard]] std::set<std::string> const & topics() const noexcept { return topics_; }
    [[nodiscard]] std::set<std::string> const & knowledge_points() const noexcept { return knowledge_points_; }

    /// Union of both kinds as Concepts, sorted.
    [[nodiscard]] ConceptCombination all() const;
    [[nodiscard]] std::size_t size() const noexcept { return topics_.size() + knowledge_points_.size(); }
    [[nodiscard]] bool empty() const noexcept { return size() == 0; }

    friend bool operator==(ConceptSet const &, ConceptSet const &) = default;

private:
    std::set<std::string> topics_;
    std::set<std::string> knowledge_points_;
};

struct ConceptParse
{
    ConceptSet concepts;
    std::vector<std::string> warnings;
};

/// Reads the "Topics" and "Knowledge Points" sections of a model response.
///
/// A section starts with a header line (optionally markdown-decorated, with
/// or without a trailing colon). Items are bulleted or numbered lines under
/// the header, or a comma/semicolon separated list after the header colon.
/// Throws FormatError when neither section is present; a missing or empty
/// single section yields a warning.
ConceptParse parse_concept_response(std::string_view raw);

/// Canonical response text; parse_concept_response(render(x)).concepts == x.
std::string render_concept_response(ConceptSet const & set);

} // namespace quest
