#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace wayfinder {

/// Strongly typed dense index. Ids are assigned in creation order and never reused.
template <class Tag>
struct Id {
    std::uint32_t value = 0;

    friend auto operator<=>(const Id&, const Id&) = default;
};

using PageId = Id<struct PageTag>;
using ElementId = Id<struct ElementTag>;

using TesterId = std::string;
using SessionId = std::string;

/// Milliseconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

enum class Role { tester, test_lead, admin };

std::string_view to_string(Role role);
Role role_from_string(std::string_view text);

inline bool is_lead(Role role) { return role == Role::test_lead || role == Role::admin; }

// Error taxonomy. The HTTP layer maps each class onto a status code.

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input or a violated domain rule (422).
class ValidationError : public Error {
public:
    ValidationError(std::string field, const std::string& message)
        : Error(message), field_(std::move(field)) {}
    explicit ValidationError(const std::string& message) : Error(message) {}

    const std::string& field() const { return field_; }

private:
    std::string field_;
};

/// Referenced entity does not exist (404).
class NotFound : public Error {
public:
    using Error::Error;
};

/// Request conflicts with current state, e.g. stale event or missing assignment (409).
class Conflict : public Error {
public:
    using Error::Error;
};

/// Caller lacks the role required for the operation (403).
class Forbidden : public Error {
public:
    using Error::Error;
};

/// Missing or unknown credentials (401).
class Unauthorized : public Error {
public:
    using Error::Error;
};

/// 64-bit FNV-1a. Stable across platforms; used for signatures and fingerprints.
constexpr std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL) {
    std::uint64_t hash = seed;
    for (unsigned char c : data) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string to_hex(std::uint64_t value);

}  // namespace wayfinder

template <class Tag>
struct std::hash<wayfinder::Id<Tag>> {
    std::size_t operator()(const wayfinder::Id<Tag>& id) const noexcept { return id.value; }
};
