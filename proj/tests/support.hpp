// Shared fixture builders for the test suite.
#pragma once

#include <random>
#include <set>
#include <string>
#include <vector>

#include "pdfmvqa/dataio.hpp"
#include "pdfmvqa/docmodel.hpp"

namespace testsupport {

using namespace pdfmvqa;

// A small well-formed document: `layout[p]` lists (category, x, y, w, h)
// tuples for page p; ids are assigned in listing order.
struct EntitySpec {
    EntityCategory category = EntityCategory::Paragraph;
    double x = 10, y = 10, w = 100, h = 20;
    std::string text = "some paragraph text";
    std::string section = "introduction";
};

inline DocumentRecord make_doc(const std::string& id,
                               const std::vector<std::vector<EntitySpec>>& layout,
                               double page_w = 612, double page_h = 792) {
    DocumentRecord doc;
    doc.document_id = id;
    int oid = 0;
    for (std::size_t p = 0; p < layout.size(); ++p) {
        DocPage page;
        page.page_name = id + "_p" + std::to_string(p);
        page.width = page_w;
        page.height = page_h;
        for (const EntitySpec& spec : layout[p]) {
            DocEntity e;
            e.object_id = oid;
            e.category = spec.category;
            e.bbox = BBox{spec.x, spec.y, spec.w, spec.h};
            e.text = spec.text;
            e.page_index = static_cast<int>(p);
            e.section = spec.section;
            page.entity_ids.push_back(oid);
            doc.entities[oid] = e;
            ++oid;
        }
        doc.pages.push_back(page);
    }
    return doc;
}

inline DocumentRecord two_page_doc() {
    return make_doc("doc0", {{EntitySpec{EntityCategory::Title, 10, 10, 200, 20, "A title", "title"},
                              EntitySpec{EntityCategory::Paragraph, 10, 40, 200, 60}},
                             {EntitySpec{EntityCategory::Paragraph, 10, 10, 200, 60},
                              EntitySpec{EntityCategory::Figure, 10, 100, 150, 120, "", ""}}});
}

inline std::string random_cell_text(std::mt19937_64& rng) {
    static const std::vector<std::string> pieces = {
        "what", "is", "the", "rate", "of", "therapy,", "\"quoted\"", "line\nbreak", "50%",
        "survivorship", "p<0.05", "figure", "comma, comma"};
    std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
    std::uniform_int_distribution<int> len(1, 8);
    std::string out;
    int n = len(rng);
    for (int i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += pieces[pick(rng)];
    }
    return out;
}

inline dataio::SplitTable random_split_table(std::mt19937_64& rng, std::size_t n_rows) {
    static const std::vector<std::string> sections = {
        "introduction", "materials and methods", "results", "conclusions", "funding",
        "table", "figure"};
    dataio::SplitTable t;
    std::uniform_int_distribution<std::size_t> sec_pick(0, sections.size() - 1);
    std::uniform_int_distribution<int> id_pick(0, 80);
    std::uniform_int_distribution<int> page_pick(0, 9);
    std::uniform_int_distribution<int> n_ans(1, 3);
    for (std::size_t i = 0; i < n_rows; ++i) {
        dataio::SplitRow r;
        r.question = random_cell_text(rng) + "?";
        r.document_id = "PMC" + std::to_string(1000 + id_pick(rng));
        std::set<int> ids;
        int k = n_ans(rng);
        while (static_cast<int>(ids.size()) < k) ids.insert(id_pick(rng));
        r.answer_objt_id.assign(ids.begin(), ids.end());
        r.super_section = sections[sec_pick(rng)];
        r.id = static_cast<std::int64_t>(i);
        int a = page_pick(rng), b = page_pick(rng);
        r.page_range = {std::min(a, b), std::max(a, b)};
        if (r.super_section != "table" && r.super_section != "figure") {
            r.context = random_cell_text(rng);
        }
        t.rows.push_back(std::move(r));
    }
    return t;
}

}  // namespace testsupport
