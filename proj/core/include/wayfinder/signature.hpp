#pragma once

#include <wayfinder/common.hpp>

#include <compare>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace wayfinder {

enum class ElementKind { link, action, input };

std::string_view to_string(ElementKind kind);
ElementKind element_kind_from_string(std::string_view text);

/// One element as reported by a PAGE_VIEW payload.
struct ElementObservation {
    ElementKind kind = ElementKind::link;
    std::string locator;
    std::string attr_key;
    std::string text;
    std::string form_group;
};

struct ElementSignature {
    ElementKind kind = ElementKind::link;
    std::string key;  // stable attribute key, else the structural locator
    std::uint64_t text_hash = 0;

    std::string canonical() const;

    friend auto operator<=>(const ElementSignature&, const ElementSignature&) = default;
};

struct PageSignature {
    std::string path;
    std::vector<std::pair<std::string, std::string>> query;  // allowlisted keys, sorted
    std::uint64_t element_hash = 0;

    std::string canonical() const;

    friend auto operator<=>(const PageSignature&, const PageSignature&) = default;
};

struct NormalizationConfig {
    std::set<std::string> query_allowlist;
};

struct ParsedUrl {
    std::string path;
    std::vector<std::pair<std::string, std::string>> query;
};

/// Splits an absolute or root-relative URL. Scheme and authority are discarded,
/// the fragment is stripped and dot segments are resolved.
/// Throws ValidationError when the URL cannot be parsed.
ParsedUrl parse_url(std::string_view url);

ElementSignature element_signature(const ElementObservation& element);

PageSignature page_signature(std::string_view url, std::span<const ElementObservation> elements,
                             const NormalizationConfig& config);

/// Throws ValidationError naming the descriptor when the observation is malformed.
void validate_observation(const ElementObservation& element);

}  // namespace wayfinder
