#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "pdfmvqa/docmodel.hpp"
#include "support.hpp"

using namespace pdfmvqa;
using testsupport::make_doc;
using testsupport::two_page_doc;

TEST_CASE("well-formed two-page document validates cleanly") {
    DocumentRecord doc = two_page_doc();
    CHECK(validate_document(doc).empty());
}

TEST_CASE("entity pointing past the last page is reported by name") {
    DocumentRecord doc = two_page_doc();
    DocEntity stray;
    stray.object_id = 99;
    stray.category = EntityCategory::Paragraph;
    stray.bbox = BBox{10, 10, 50, 20};
    stray.text = "stray";
    stray.page_index = 3;  // only 2 pages exist
    doc.entities[99] = stray;
    auto violations = validate_document(doc);
    REQUIRE(violations.size() == 1);
    CHECK(violations[0].find("99") != std::string::npos);
    CHECK(violations[0].find("page_index 3") != std::string::npos);
}

TEST_CASE("duplicate object_id is detected") {
    DocumentRecord doc = two_page_doc();
    // List id 7 on both pages after renaming an entity to 7.
    DocEntity e = doc.entities.at(0);
    e.object_id = 7;
    e.page_index = 0;
    doc.entities.erase(0);
    doc.entities[7] = e;
    doc.pages[0].entity_ids = {7, 1};
    doc.pages[1].entity_ids = {7, 2, 3};
    bool found = false;
    for (const auto& v : validate_document(doc)) {
        if (v.find("duplicate object_id 7") != std::string::npos) found = true;
    }
    CHECK(found);
}

TEST_CASE("validator flags bad boxes, empty text and broken ordering") {
    DocumentRecord doc = two_page_doc();
    doc.entities.at(0).bbox.w = -5;
    doc.entities.at(1).text.clear();
    doc.pages[1].entity_ids = {3, 2};
    auto violations = validate_document(doc);
    CHECK(violations.size() >= 3);
}

TEST_CASE("entity_page_span basics") {
    auto doc = make_doc("d", {{testsupport::EntitySpec{}},
                              {testsupport::EntitySpec{}},
                              {testsupport::EntitySpec{}},
                              {},
                              {},
                              {},
                              {testsupport::EntitySpec{}}});
    // ids: 0 on page 0, 1 on page 1, 2 on page 2, 3 on page 6
    CHECK(entity_page_span(doc, {2}) == std::pair<int, int>{2, 2});
    CHECK(entity_page_span(doc, {1, 2, 3}) == std::pair<int, int>{1, 6});
    CHECK_THROWS_WITH(entity_page_span(doc, {42}),
                      Catch::Matchers::ContainsSubstring("42"));
    CHECK_THROWS_AS(entity_page_span(doc, {}), std::invalid_argument);
}

TEST_CASE("entity_page_span is permutation-invariant and monotone under union") {
    auto doc = make_doc("d", {{testsupport::EntitySpec{}, testsupport::EntitySpec{}},
                              {testsupport::EntitySpec{}},
                              {testsupport::EntitySpec{}, testsupport::EntitySpec{}}});
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> pick(0, 4);
    for (int trial = 0; trial < 200; ++trial) {
        std::set<int> a, b;
        for (int i = 0; i < 3; ++i) a.insert(pick(rng));
        for (int i = 0; i < 2; ++i) b.insert(pick(rng));
        auto span_a = entity_page_span(doc, a);
        std::set<int> ab = a;
        ab.insert(b.begin(), b.end());
        auto span_ab = entity_page_span(doc, ab);
        CHECK(span_ab.first <= span_a.first);
        CHECK(span_ab.second >= span_a.second);
    }
}

TEST_CASE("page_range width matches the Appendix sample") {
    // A table question spanning pages 2..6 covers 5 pages.
    std::pair<int, int> page_range{2, 6};
    CHECK(page_range.second - page_range.first + 1 == 5);
}

TEST_CASE("sample validation rules") {
    DocumentRecord doc = two_page_doc();
    QASample s;
    s.id = 1;
    s.document_id = doc.document_id;
    s.answer_objt_ids = {0, 1};
    s.super_section = SuperSection::Intro;
    s.page_range = {0, 1};
    s.context = "some section text";
    CHECK(validate_sample(doc, s).empty());

    QASample visual = s;
    visual.super_section = SuperSection::Table;
    CHECK_FALSE(validate_sample(doc, visual).empty());  // context must be absent
    visual.context.reset();
    CHECK(validate_sample(doc, visual).empty());

    QASample bad = s;
    bad.answer_objt_ids = {123};
    CHECK_FALSE(validate_sample(doc, bad).empty());
}

TEST_CASE("category and super-section string round trips") {
    for (int i = 0; i < kNumEntityCategories; ++i) {
        auto c = static_cast<EntityCategory>(i);
        CHECK(entity_category_from_string(to_string(c)) == c);
    }
    for (SuperSection s : all_super_sections()) {
        CHECK(super_section_from_string(to_string(s)) == s);
    }
    CHECK_THROWS_AS(entity_category_from_string("Chart"), std::invalid_argument);
}
