#include <wayfinder/signature.hpp>

#include <gtest/gtest.h>

#include <vector>

namespace wayfinder {
namespace {

TEST(ParseUrl, DropsSchemeHostAndFragment) {
    auto u = parse_url("https://example.org:8080/a/b.php?id=3#top");
    EXPECT_EQ(u.path, "/a/b.php");
    ASSERT_EQ(u.query.size(), 1u);
    EXPECT_EQ(u.query[0].first, "id");
    EXPECT_EQ(u.query[0].second, "3");
}

TEST(ParseUrl, ResolvesDotSegments) {
    EXPECT_EQ(parse_url("/a/./b/../c").path, "/a/c");
    EXPECT_EQ(parse_url("/../..").path, "/");
    EXPECT_EQ(parse_url("/a//b/").path, "/a/b");
}

TEST(ParseUrl, RejectsMalformed) {
    EXPECT_THROW(parse_url(""), ValidationError);
    EXPECT_THROW(parse_url("relative/path"), ValidationError);
    EXPECT_THROW(parse_url("http:///nohost"), ValidationError);
    EXPECT_THROW(parse_url("/with space"), ValidationError);
    EXPECT_THROW(parse_url("1ttp://x/"), ValidationError);
}

TEST(ElementSignature, PrefersStableAttribute) {
    ElementObservation a{ElementKind::link, "div[1]/a[2]", "id=home", "Home", ""};
    ElementObservation b{ElementKind::link, "div[3]/a[1]", "id=home", "Home", ""};
    EXPECT_EQ(element_signature(a), element_signature(b));
    b.attr_key.clear();
    EXPECT_NE(element_signature(a), element_signature(b));
}

TEST(ElementSignature, TextAndKindDistinguish) {
    ElementObservation a{ElementKind::link, "x", "", "Home", ""};
    ElementObservation b = a;
    b.text = "Other";
    EXPECT_NE(element_signature(a), element_signature(b));
    b = a;
    b.kind = ElementKind::action;
    EXPECT_NE(element_signature(a), element_signature(b));
}

TEST(ValidateObservation, NeedsLocatorOrKey) {
    EXPECT_THROW(validate_observation(ElementObservation{ElementKind::link, "", "", "t", ""}), ValidationError);
    EXPECT_NO_THROW(validate_observation(ElementObservation{ElementKind::link, "", "k", "t", ""}));
}

TEST(PageSignature, IgnoresElementOrderAndUnlistedQueryKeys) {
    std::vector<ElementObservation> e1{{ElementKind::link, "a", "", "A", ""}, {ElementKind::action, "b", "", "B", "f"}};
    std::vector<ElementObservation> e2{e1[1], e1[0]};
    NormalizationConfig cfg;
    cfg.query_allowlist = {"id"};
    auto s1 = page_signature("/p.php?id=1&sid=abc", e1, cfg);
    auto s2 = page_signature("http://host/p.php?sid=zzz&id=1", e2, cfg);
    EXPECT_EQ(s1, s2);
    EXPECT_EQ(s1.canonical(), s2.canonical());
    EXPECT_NE(s1, page_signature("/p.php?id=2", e1, cfg));
}

TEST(PageSignature, ElementSetChangesIdentity) {
    std::vector<ElementObservation> e1{{ElementKind::link, "a", "", "A", ""}};
    std::vector<ElementObservation> e2{{ElementKind::link, "a", "", "A", ""}, {ElementKind::link, "b", "", "B", ""}};
    EXPECT_NE(page_signature("/p", e1, {}), page_signature("/p", e2, {}));
}

TEST(PageSignature, AllowlistedQuerySorted) {
    NormalizationConfig cfg;
    cfg.query_allowlist = {"a", "b"};
    auto s = page_signature("/p?b=2&a=1", {}, cfg);
    ASSERT_EQ(s.query.size(), 2u);
    EXPECT_EQ(s.query[0].first, "a");
    EXPECT_EQ(s.canonical().substr(0, 10), "/p?a=1&b=2");
}

}  // namespace
}  // namespace wayfinder
