#include <wayfinder/signature.hpp>

#include <algorithm>
#include <cctype>

namespace wayfinder {

std::string_view to_string(ElementKind kind) {
    switch (kind) {
        case ElementKind::link: return "link";
        case ElementKind::action: return "action";
        case ElementKind::input: return "input";
    }
    return "link";
}

ElementKind element_kind_from_string(std::string_view text) {
    if (text == "link") return ElementKind::link;
    if (text == "action") return ElementKind::action;
    if (text == "input") return ElementKind::input;
    throw ValidationError("kind", "unknown element kind '" + std::string(text) + "'");
}

std::string ElementSignature::canonical() const {
    std::string out{to_string(kind)};
    out += '|';
    out += key;
    out += '|';
    out += to_hex(text_hash);
    return out;
}

std::string PageSignature::canonical() const {
    std::string out = path;
    char sep = '?';
    for (const auto& [k, v] : query) {
        out += sep;
        out += k;
        out += '=';
        out += v;
        sep = '&';
    }
    out += '#';
    out += to_hex(element_hash);
    return out;
}

namespace {

bool is_bad_char(unsigned char c) { return c <= 0x20 || c == 0x7f; }

std::string normalize_path(std::string_view raw) {
    std::vector<std::string> segments;
    std::size_t pos = 0;
    while (pos <= raw.size()) {
        auto next = raw.find('/', pos);
        if (next == std::string_view::npos) next = raw.size();
        std::string_view seg = raw.substr(pos, next - pos);
        if (seg == "..") {
            if (!segments.empty()) segments.pop_back();
        } else if (!seg.empty() && seg != ".") {
            segments.emplace_back(seg);
        }
        pos = next + 1;
    }
    std::string out;
    for (const auto& s : segments) {
        out += '/';
        out += s;
    }
    return out.empty() ? "/" : out;
}

}  // namespace

ParsedUrl parse_url(std::string_view url) {
    if (url.empty()) throw ValidationError("url", "empty URL");
    if (std::any_of(url.begin(), url.end(), [](char c) { return is_bad_char(static_cast<unsigned char>(c)); })) {
        throw ValidationError("url", "URL contains whitespace or control characters: " + std::string(url));
    }
    std::string_view rest = url;
    if (auto hash = rest.find('#'); hash != std::string_view::npos) rest = rest.substr(0, hash);

    if (auto scheme_end = rest.find("://"); scheme_end != std::string_view::npos) {
        std::string_view scheme = rest.substr(0, scheme_end);
        bool scheme_ok = !scheme.empty() && std::isalpha(static_cast<unsigned char>(scheme[0])) &&
                         std::all_of(scheme.begin(), scheme.end(), [](char c) {
                             return std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '.';
                         });
        if (!scheme_ok) throw ValidationError("url", "malformed scheme in URL: " + std::string(url));
        rest = rest.substr(scheme_end + 3);
        auto path_start = rest.find_first_of("/?");
        std::string_view authority = rest.substr(0, path_start);
        if (authority.empty()) throw ValidationError("url", "URL has no host: " + std::string(url));
        rest = path_start == std::string_view::npos ? std::string_view{} : rest.substr(path_start);
    } else if (rest.empty() || rest.front() != '/') {
        throw ValidationError("url", "URL must be absolute or root-relative: " + std::string(url));
    }

    ParsedUrl parsed;
    std::string_view path = rest;
    std::string_view query;
    if (auto q = rest.find('?'); q != std::string_view::npos) {
        path = rest.substr(0, q);
        query = rest.substr(q + 1);
    }
    parsed.path = normalize_path(path);
    std::size_t pos = 0;
    while (pos < query.size()) {
        auto amp = query.find('&', pos);
        if (amp == std::string_view::npos) amp = query.size();
        std::string_view pair = query.substr(pos, amp - pos);
        if (!pair.empty()) {
            auto eq = pair.find('=');
            if (eq == std::string_view::npos) {
                parsed.query.emplace_back(std::string(pair), "");
            } else {
                parsed.query.emplace_back(std::string(pair.substr(0, eq)), std::string(pair.substr(eq + 1)));
            }
        }
        pos = amp + 1;
    }
    return parsed;
}

void validate_observation(const ElementObservation& element) {
    if (element.locator.empty() && element.attr_key.empty()) {
        throw ValidationError("elements", "element descriptor of kind '" + std::string(to_string(element.kind)) +
                                              "' has neither locator nor attr_key");
    }
}

ElementSignature element_signature(const ElementObservation& element) {
    ElementSignature sig;
    sig.kind = element.kind;
    sig.key = element.attr_key.empty() ? "path:" + element.locator : "attr:" + element.attr_key;
    sig.text_hash = fnv1a(element.text);
    return sig;
}

PageSignature page_signature(std::string_view url, std::span<const ElementObservation> elements,
                             const NormalizationConfig& config) {
    ParsedUrl parsed = parse_url(url);
    PageSignature sig;
    sig.path = std::move(parsed.path);
    for (auto& [k, v] : parsed.query) {
        if (config.query_allowlist.count(k)) sig.query.emplace_back(std::move(k), std::move(v));
    }
    std::sort(sig.query.begin(), sig.query.end());

    std::vector<std::string> canon;
    canon.reserve(elements.size());
    for (const auto& e : elements) canon.push_back(element_signature(e).canonical());
    std::sort(canon.begin(), canon.end());
    std::uint64_t h = fnv1a("");
    for (const auto& c : canon) {
        h = fnv1a(c, h);
        h = fnv1a("\n", h);
    }
    sig.element_hash = h;
    return sig;
}

}  // namespace wayfinder
