#include <wayfinder/common.hpp>

#include <cstdio>

namespace wayfinder {

std::string_view to_string(Role role) {
    switch (role) {
        case Role::tester: return "tester";
        case Role::test_lead: return "test_lead";
        case Role::admin: return "admin";
    }
    return "tester";
}

Role role_from_string(std::string_view text) {
    if (text == "tester") return Role::tester;
    if (text == "test_lead") return Role::test_lead;
    if (text == "admin") return Role::admin;
    throw ValidationError("role", "unknown role '" + std::string(text) + "'");
}

std::string to_hex(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

}  // namespace wayfinder
