#include "quest/concept.hpp"

#include <algorithm>
#include <cctype>
#include <optional>

#include <fmt/format.h>

#include "quest/error.hpp"

namespace quest {

namespace {

bool is_space(char c) noexcept
{
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s) noexcept
{
    while (!s.empty() && is_space(s.front())) {
        s.remove_prefix(1);
    }
    while (!s.empty() && is_space(s.back())) {
        s.remove_suffix(1);
    }
    return s;
}

std::string lower_ascii(std::string_view s)
{
    std::string out(s);
    for (auto & c : out) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

/// Strips list markers ("-", "*", "•", "1.", "2)") and wrapping emphasis/quotes.
std::string_view strip_item_decoration(std::string_view s)
{
    s = trim(s);
    if (s.starts_with("\xe2\x80\xa2")) { // U+2022 bullet
        s.remove_prefix(3);
    } else if (!s.empty() && (s.front() == '-' || s.front() == '*' || s.front() == '+')
               && !(s.size() > 1 && s[1] == '*')) {
        s.remove_prefix(1);
    }
    s = trim(s);
    for (;;) {
        bool changed = false;
        for (std::string_view wrap : {"**", "__", "`", "\"", "'"}) {
            if (s.size() >= 2 * wrap.size() && s.starts_with(wrap) && s.ends_with(wrap)) {
                s = trim(s.substr(wrap.size(), s.size() - 2 * wrap.size()));
                changed = true;
            }
        }
        if (!changed) {
            break;
        }
    }
    return s;
}

/// Returns the item text if `line` is a bullet or numbered entry.
std::optional<std::string_view> list_item(std::string_view line)
{
    auto t = trim(line);
    if (t.empty()) {
        return std::nullopt;
    }
    if (t.starts_with("\xe2\x80\xa2") || ((t.front() == '-' || t.front() == '*' || t.front() == '+') && t.size() > 1
                                         && is_space(t[1]))) {
        return strip_item_decoration(t);
    }
    std::size_t i = 0;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) {
        ++i;
    }
    if (i > 0 && i < t.size() && (t[i] == '.' || t[i] == ')')) {
        return strip_item_decoration(t.substr(i + 1));
    }
    return std::nullopt;
}

enum class Section
{
    None,
    Topics,
    KnowledgePoints,
};

struct Header
{
    Section section;
    std::string_view inline_items;
};

/// Recognizes "Topics:", "## Knowledge Points", "**Topic:** a, b" and similar.
std::optional<Header> header_line(std::string_view line)
{
    auto t = trim(line);
    while (!t.empty() && t.front() == '#') {
        t.remove_prefix(1);
    }
    t = trim(t);
    // Bullet-prefixed headers such as "- Topics:" are accepted too.
    if (t.size() > 1 && (t.front() == '-' || t.front() == '*') && is_space(t[1])) {
        t = trim(t.substr(1));
    }
    while (t.starts_with("**") || t.starts_with("__")) {
        t = trim(t.substr(2));
    }
    auto const lower = lower_ascii(t.substr(0, std::min<std::size_t>(t.size(), 32)));

    Section section = Section::None;
    std::size_t consumed = 0;
    for (std::string_view key : {"knowledge points", "knowledge_points", "knowledge-points", "knowledge point"}) {
        if (lower.starts_with(key)) {
            section = Section::KnowledgePoints;
            consumed = key.size();
            break;
        }
    }
    if (section == Section::None) {
        for (std::string_view key : {"topics", "topic"}) {
            if (lower.starts_with(key)) {
                section = Section::Topics;
                consumed = key.size();
                break;
            }
        }
    }
    if (section == Section::None) {
        return std::nullopt;
    }
    auto rest = t.substr(consumed);
    while (rest.starts_with("**") || rest.starts_with("__")) {
        rest.remove_prefix(2);
    }
    rest = trim(rest);
    if (rest.starts_with(":")) {
        rest.remove_prefix(1);
    } else if (!rest.empty()) {
        // "Topics are ..." is prose, not a header.
        return std::nullopt;
    }
    while (trim(rest).starts_with("**") || trim(rest).starts_with("__")) {
        rest = trim(rest).substr(2);
    }
    return Header{section, trim(rest)};
}

void add_inline_items(ConceptSet & set, ConceptKind kind, std::string_view items)
{
    std::size_t pos = 0;
    while (pos <= items.size()) {
        auto const next = items.find_first_of(",;", pos);
        auto piece = items.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos);
        set.add(kind, strip_item_decoration(piece));
        if (next == std::string_view::npos) {
            break;
        }
        pos = next + 1;
    }
}

} // namespace

std::string_view to_string(ConceptKind kind) noexcept
{
    return kind == ConceptKind::Topic ? "topic" : "knowledge_point";
}

ConceptKind concept_kind_from_string(std::string_view s)
{
    if (s == "topic") {
        return ConceptKind::Topic;
    }
    if (s == "knowledge_point") {
        return ConceptKind::KnowledgePoint;
    }
    throw FormatError(fmt::format("unknown concept kind '{}'", s));
}

std::string normalize_concept_name(std::string_view raw)
{
    std::string out;
    out.reserve(raw.size());
    bool pending_space = false;
    for (char c : trim(raw)) {
        if (is_space(c)) {
            pending_space = true;
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

Concept Concept::make(ConceptKind kind, std::string_view raw)
{
    auto name = normalize_concept_name(raw);
    if (name.empty()) {
        throw FormatError("concept name is empty after normalization");
    }
    return Concept{kind, std::move(name)};
}

bool ConceptSet::add(ConceptKind kind, std::string_view raw)
{
    auto name = normalize_concept_name(raw);
    if (name.empty()) {
        return false;
    }
    auto & target = kind == ConceptKind::Topic ? topics_ : knowledge_points_;
    return target.insert(std::move(name)).second;
}

ConceptCombination ConceptSet::all() const
{
    ConceptCombination out;
    for (auto const & t : topics_) {
        out.insert(Concept{ConceptKind::Topic, t});
    }
    for (auto const & k : knowledge_points_) {
        out.insert(Concept{ConceptKind::KnowledgePoint, k});
    }
    return out;
}

ConceptParse parse_concept_response(std::string_view raw)
{
    ConceptParse result;
    Section current = Section::None;
    bool saw_topics = false;
    bool saw_kps = false;

    std::size_t pos = 0;
    while (pos <= raw.size()) {
        auto const nl = raw.find('\n', pos);
        auto line = raw.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = (nl == std::string_view::npos) ? raw.size() + 1 : nl + 1;

        if (auto h = header_line(line)) {
            current = h->section;
            (current == Section::Topics ? saw_topics : saw_kps) = true;
            if (!h->inline_items.empty()) {
                add_inline_items(result.concepts,
                                 current == Section::Topics ? ConceptKind::Topic : ConceptKind::KnowledgePoint,
                                 h->inline_items);
            }
            continue;
        }
        if (current == Section::None) {
            continue;
        }
        if (auto item = list_item(line)) {
            result.concepts.add(current == Section::Topics ? ConceptKind::Topic : ConceptKind::KnowledgePoint, *item);
        }
    }

    if (!saw_topics && !saw_kps) {
        throw FormatError("response has neither a topics nor a knowledge-points section");
    }
    if (!saw_topics) {
        result.warnings.emplace_back("topics section missing");
    } else if (result.concepts.topics().empty()) {
        result.warnings.emplace_back("topics section empty");
    }
    if (!saw_kps) {
        result.warnings.emplace_back("knowledge-points section missing");
    } else if (result.concepts.knowledge_points().empty()) {
        result.warnings.emplace_back("knowledge-points section empty");
    }
    return result;
}

std::string render_concept_response(ConceptSet const & set)
{
    std::string out = "Topics:\n";
    for (auto const & t : set.topics()) {
        out += fmt::format("- {}\n", t);
    }
    out += "Knowledge Points:\n";
    for (auto const & k : set.knowledge_points()) {
        out += fmt::format("- {}\n", k);
    }
    return out;
}

} // namespace quest
