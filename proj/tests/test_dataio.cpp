#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <random>
#include <set>

#include "pdfmvqa/dataio.hpp"
#include "support.hpp"

using namespace pdfmvqa;
using namespace pdfmvqa::dataio;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    fs::path dir = fs::temp_directory_path() / "pdfmvqa_dataio_test";
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("split header and sample-row cell syntax") {
    SplitTable t;
    SplitRow r;
    r.question = "What is the survivorship rate of Total Hip Arthroplasty at 25-year follow-up?";
    r.document_id = "PMC8987314";
    r.answer_objt_id = {7, 8};
    r.super_section = "introduction";
    r.id = 21045;
    r.page_range = {0, 1};
    r.context = "Total hip arthroplasty (THA) is a highly successful operation";
    t.rows.push_back(r);

    std::string text = render_split(t);
    CHECK(text.rfind("question,document_id,answer_objt_id,super_section,id,page_range,context",
                     0) == 0);
    CHECK(text.find("\"[7, 8]\"") != std::string::npos);
    CHECK(text.find("\"(0, 1)\"") != std::string::npos);

    SplitTable back = parse_split(text);
    REQUIRE(back.rows.size() == 1);
    CHECK(back.rows[0].answer_objt_id == std::vector<int>{7, 8});
    CHECK(back.rows[0].page_range == std::pair<int, int>{0, 1});
    CHECK(back.rows[0].id == 21045);
    CHECK(back.rows[0].super_section == "introduction");
}

TEST_CASE("table-question rows carry an empty context cell that parses as null") {
    SplitTable t;
    SplitRow r;
    r.question = "Can you locate the table comparing CMV characteristics in patients?";
    r.document_id = "PMC9399572";
    r.answer_objt_id = {64};
    r.super_section = "table";
    r.id = 36776;
    r.page_range = {2, 6};
    t.rows.push_back(r);
    std::string text = render_split(t);
    CHECK(text.find("[64]") != std::string::npos);

    SplitTable back = parse_split(text);
    REQUIRE(back.rows.size() == 1);
    CHECK_FALSE(back.rows[0].context.has_value());
    CHECK(back.rows[0].page_range == std::pair<int, int>{2, 6});
}

TEST_CASE("empty table round-trips as a header-only file") {
    SplitTable t;
    std::string text = render_split(t);
    CHECK(text == std::string(kSplitHeader) + "\n");
    CHECK(parse_split(text).rows.empty());
}

TEST_CASE("malformed cells report the row number") {
    std::string text = std::string(kSplitHeader) + "\n" + "q?,d1,7,intro,1,\"(0, 1)\",ctx\n";
    CHECK_THROWS_WITH(parse_split(text), Catch::Matchers::ContainsSubstring("row 2"));

    std::string bad_range = std::string(kSplitHeader) + "\n" + "q?,d1,[7],intro,1,01,ctx\n";
    CHECK_THROWS_WITH(parse_split(bad_range), Catch::Matchers::ContainsSubstring("row 2"));
}

TEST_CASE("split CSV round-trips byte-identically on randomized tables") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        SplitTable t = testsupport::random_split_table(rng, 1 + trial % 17);
        std::string once = render_split(t);
        SplitTable parsed = parse_split(once);
        std::string twice = render_split(parsed);
        REQUIRE(once == twice);
    }
}

TEST_CASE("metadata store round trip and canonical form") {
    MetadataStore store;
    store.documents["PMC1"] = testsupport::two_page_doc();
    store.documents["PMC1"].document_id = "PMC1";

    std::string once = render_metadata(store);
    CHECK(once.find("\"page_info\"") != std::string::npos);
    MetadataStore back = metadata_from_json(nlohmann::json::parse(once));
    std::string twice = render_metadata(back);
    CHECK(once == twice);
    REQUIRE(back.documents.count("PMC1"));
    CHECK(back.documents["PMC1"].pages.size() == 2);
    CHECK(back.documents["PMC1"].entities.size() == 4);
    CHECK(back.documents["PMC1"].entities.at(0).section == "title");
}

TEST_CASE("metadata schema violations name the offending path") {
    nlohmann::json root = metadata_to_json([] {
        MetadataStore s;
        s.documents["PMCX"] = testsupport::two_page_doc();
        return s;
    }());
    root["PMCX"]["page_info"][0]["objects"][1]["bbox"][0] = -1.0;
    CHECK_THROWS_WITH(metadata_from_json(root),
                      Catch::Matchers::ContainsSubstring("PMCX.page_info[0].objects[1]"));

    nlohmann::json bad_size = metadata_to_json([] {
        MetadataStore s;
        s.documents["PMCY"] = testsupport::two_page_doc();
        return s;
    }());
    bad_size["PMCY"]["page_info"][1]["size"][0] = 0.0;
    CHECK_THROWS_WITH(metadata_from_json(bad_size),
                      Catch::Matchers::ContainsSubstring("PMCY.page_info[1]"));
}

TEST_CASE("metadata file writes are stable on disk") {
    fs::path path = temp_dir() / "meta.json";
    MetadataStore store;
    store.documents["PMC1"] = testsupport::two_page_doc();
    write_metadata(store, path);
    MetadataStore back = read_metadata(path);
    write_metadata(back, path);
    MetadataStore again = read_metadata(path);
    CHECK(render_metadata(back) == render_metadata(again));
}

TEST_CASE("default ratio rule reproduces the reference split sizes exactly") {
    std::vector<std::string> ids;
    ids.reserve(3146);
    for (int i = 0; i < 3146; ++i) ids.push_back("doc" + std::to_string(i));
    Splits s = make_splits(ids, SplitRatios{}, 1);
    CHECK(s.train.size() == 2209);
    CHECK(s.val.size() == 314);
    CHECK(s.test.size() == 623);
}

TEST_CASE("rounding floors val/test and sends the remainder to train") {
    std::vector<std::string> ids;
    for (int i = 0; i < 10; ++i) ids.push_back("d" + std::to_string(i));
    Splits s = make_splits(ids, SplitRatios{0.8, 0.1, 0.1}, 0);
    CHECK(s.train.size() == 8);
    CHECK(s.val.size() == 1);
    CHECK(s.test.size() == 1);
}

TEST_CASE("splits are deterministic and document-disjoint") {
    std::vector<std::string> ids;
    for (int i = 0; i < 137; ++i) ids.push_back("d" + std::to_string(i));
    Splits a = make_splits(ids, SplitRatios{}, 99);
    Splits b = make_splits(ids, SplitRatios{}, 99);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    CHECK(a.test == b.test);

    std::set<std::string> seen;
    for (const auto& part : {a.train, a.val, a.test}) {
        for (const auto& id : part) {
            CHECK(seen.insert(id).second);  // no document spans splits
        }
    }
    CHECK(seen.size() == ids.size());

    Splits c = make_splits(ids, SplitRatios{}, 100);
    CHECK(a.train != c.train);  // seed actually matters
}

TEST_CASE("make_splits rejects degenerate input") {
    CHECK_THROWS_AS(make_splits({}, SplitRatios{}, 0), std::invalid_argument);
    CHECK_THROWS_AS(make_splits({"a"}, SplitRatios{0.5, 0.2, 0.2}, 0), std::invalid_argument);
}

TEST_CASE("validate_split cross-references answers against the store") {
    MetadataStore store;
    store.documents["PMC1"] = testsupport::two_page_doc();
    SplitTable t;
    SplitRow r;
    r.question = "q?";
    r.document_id = "PMC1";
    r.answer_objt_id = {0};
    r.super_section = "introduction";
    r.id = 0;
    r.page_range = {0, 0};
    r.context = "ctx";
    t.rows.push_back(r);
    CHECK(validate_split(t, store).empty());

    t.rows[0].answer_objt_id = {42};
    CHECK(validate_split(t, store).size() == 1);
    t.rows[0].document_id = "PMC404";
    CHECK(validate_split(t, store).size() == 1);
}
