// Core domain types shared by every pipeline stage: pages, typed semantic
// entities in reading order, question samples and prediction sets.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pdfmvqa {

// Axis-aligned box in page units, top-left origin, COCO convention (x, y, w, h).
struct BBox {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    bool valid() const { return w > 0.0 && h > 0.0 && x >= 0.0 && y >= 0.0; }
    double right() const { return x + w; }
    double bottom() const { return y + h; }
};

enum class EntityCategory {
    Title,
    Abstract,
    Section,
    Paragraph,
    List,
    Figure,
    Table,
    FigureCaption,
    TableCaption,
};

inline constexpr int kNumEntityCategories = 9;

inline const char* to_string(EntityCategory c) {
    switch (c) {
        case EntityCategory::Title: return "Title";
        case EntityCategory::Abstract: return "Abstract";
        case EntityCategory::Section: return "Section";
        case EntityCategory::Paragraph: return "Paragraph";
        case EntityCategory::List: return "List";
        case EntityCategory::Figure: return "Figure";
        case EntityCategory::Table: return "Table";
        case EntityCategory::FigureCaption: return "FigureCaption";
        case EntityCategory::TableCaption: return "TableCaption";
    }
    return "?";
}

inline EntityCategory entity_category_from_string(const std::string& s) {
    static const std::map<std::string, EntityCategory> table = {
        {"Title", EntityCategory::Title},
        {"Abstract", EntityCategory::Abstract},
        {"Section", EntityCategory::Section},
        {"Paragraph", EntityCategory::Paragraph},
        {"List", EntityCategory::List},
        {"Figure", EntityCategory::Figure},
        {"Table", EntityCategory::Table},
        {"FigureCaption", EntityCategory::FigureCaption},
        {"TableCaption", EntityCategory::TableCaption},
    };
    auto it = table.find(s);
    if (it == table.end()) throw std::invalid_argument("unknown entity category: " + s);
    return it->second;
}

// One typed semantic region of a page. `object_id` is the document-global
// reading-order rank (0-based). `section` tags the enclosing first-level
// section title (lowercased); empty when untagged. Entities split across
// boxes or pages share the same `section` and `text`.
struct DocEntity {
    int object_id = 0;
    EntityCategory category = EntityCategory::Paragraph;
    BBox bbox;
    std::string text;
    int page_index = 0;
    std::string section;
};

struct DocPage {
    std::string page_name;
    double width = 0.0;
    double height = 0.0;
    std::vector<int> entity_ids;  // reading order
};

struct DocumentRecord {
    std::string document_id;
    std::vector<DocPage> pages;
    std::map<int, DocEntity> entities;  // object_id -> entity

    const DocEntity& entity(int object_id) const {
        auto it = entities.find(object_id);
        if (it == entities.end()) {
            throw std::out_of_range("unknown object_id " + std::to_string(object_id) +
                                    " in document " + document_id);
        }
        return it->second;
    }
};

enum class SuperSection { Intro, MM, RD, Concl, Other, Table, Figure };

inline const char* to_string(SuperSection s) {
    switch (s) {
        case SuperSection::Intro: return "Intro";
        case SuperSection::MM: return "MM";
        case SuperSection::RD: return "RD";
        case SuperSection::Concl: return "Concl";
        case SuperSection::Other: return "Other";
        case SuperSection::Table: return "Table";
        case SuperSection::Figure: return "Figure";
    }
    return "?";
}

inline SuperSection super_section_from_string(const std::string& s) {
    static const std::map<std::string, SuperSection> table = {
        {"Intro", SuperSection::Intro}, {"MM", SuperSection::MM},
        {"RD", SuperSection::RD},       {"Concl", SuperSection::Concl},
        {"Other", SuperSection::Other}, {"Table", SuperSection::Table},
        {"Figure", SuperSection::Figure},
    };
    auto it = table.find(s);
    if (it == table.end()) throw std::invalid_argument("unknown super section: " + s);
    return it->second;
}

inline const std::vector<SuperSection>& all_super_sections() {
    static const std::vector<SuperSection> v = {
        SuperSection::Intro, SuperSection::MM,    SuperSection::RD,    SuperSection::Concl,
        SuperSection::Other, SuperSection::Table, SuperSection::Figure};
    return v;
}

// One generated question with its ground-truth entity set. `page_range` is
// 0-based inclusive and covers the pages of the answer's first-level section.
// `context` carries the section text for paragraph questions and is absent
// for Table/Figure questions.
struct QASample {
    std::string question;
    std::string document_id;
    std::set<int> answer_objt_ids;
    SuperSection super_section = SuperSection::Other;
    std::int64_t id = 0;
    std::pair<int, int> page_range{0, 0};
    std::optional<std::string> context;
};

// A retriever's answer for one question. Empty sets are legal: the
// recogniser may reject every entity.
struct PredictionSet {
    std::int64_t question_id = 0;
    std::set<int> predicted_ids;
};

// ---------------------------------------------------------------------------
// Structural validation
// ---------------------------------------------------------------------------

// Returns one human-readable violation per broken invariant; empty means the
// record is well formed. Violations are data, not failures.
inline std::vector<std::string> validate_document(const DocumentRecord& doc) {
    std::vector<std::string> out;
    auto fail = [&](const std::string& msg) { out.push_back(msg); };

    for (std::size_t p = 0; p < doc.pages.size(); ++p) {
        const DocPage& page = doc.pages[p];
        if (!(page.width > 0.0) || !(page.height > 0.0)) {
            fail("page " + std::to_string(p) + " (" + page.page_name + ") has non-positive size");
        }
    }

    // Page membership and box containment.
    std::map<int, int> owner_page;
    for (std::size_t p = 0; p < doc.pages.size(); ++p) {
        for (int id : doc.pages[p].entity_ids) {
            auto it = doc.entities.find(id);
            if (it == doc.entities.end()) {
                fail("page " + std::to_string(p) + " references missing object_id " +
                     std::to_string(id));
                continue;
            }
            if (owner_page.count(id)) {
                fail("duplicate object_id " + std::to_string(id));
                continue;
            }
            owner_page[id] = static_cast<int>(p);
            const DocEntity& e = it->second;
            if (e.page_index != static_cast<int>(p)) {
                fail("entity " + std::to_string(id) + " has page_index " +
                     std::to_string(e.page_index) + " but is listed on page " + std::to_string(p));
            }
            const DocPage& page = doc.pages[p];
            if (!e.bbox.valid()) {
                fail("entity " + std::to_string(id) + " has invalid bbox");
            } else if (e.bbox.right() > page.width + 1e-6 || e.bbox.bottom() > page.height + 1e-6) {
                fail("entity " + std::to_string(id) + " bbox exceeds page " + std::to_string(p) +
                     " bounds");
            }
        }
    }

    for (const auto& [id, e] : doc.entities) {
        if (e.object_id != id) {
            fail("entity map key " + std::to_string(id) + " disagrees with object_id " +
                 std::to_string(e.object_id));
        }
        if (!owner_page.count(id)) {
            if (e.page_index < 0 || e.page_index >= static_cast<int>(doc.pages.size())) {
                fail("entity " + std::to_string(id) + " has page_index " +
                     std::to_string(e.page_index) + " but document has " +
                     std::to_string(doc.pages.size()) + " pages");
            } else {
                fail("entity " + std::to_string(id) + " is not listed on any page");
            }
        }
        bool text_optional =
            e.category == EntityCategory::Figure || e.category == EntityCategory::Table;
        if (!text_optional && e.text.empty()) {
            fail("entity " + std::to_string(id) + " (" + to_string(e.category) +
                 ") has empty text");
        }
    }

    // Concatenated per-page reading order must be strictly increasing.
    int prev = -1;
    bool increasing = true;
    for (const DocPage& page : doc.pages) {
        for (int id : page.entity_ids) {
            if (id <= prev) increasing = false;
            prev = id;
        }
    }
    if (!increasing) fail("concatenated page entity_ids are not strictly increasing");

    return out;
}

// Min/max page_index over the referenced entities. Unknown ids are an error.
inline std::pair<int, int> entity_page_span(const DocumentRecord& doc, const std::set<int>& ids) {
    if (ids.empty()) throw std::invalid_argument("entity_page_span: empty id set");
    int lo = 1 << 30, hi = -1;
    for (int id : ids) {
        const DocEntity& e = doc.entity(id);  // throws naming the id
        lo = std::min(lo, e.page_index);
        hi = std::max(hi, e.page_index);
    }
    return {lo, hi};
}

// Sample-level checks that need the owning document (answer ids resolve,
// page_range ordered, context presence rule).
inline std::vector<std::string> validate_sample(const DocumentRecord& doc, const QASample& s) {
    std::vector<std::string> out;
    if (s.answer_objt_ids.empty()) out.push_back("sample " + std::to_string(s.id) + ": empty answer set");
    for (int id : s.answer_objt_ids) {
        if (!doc.entities.count(id)) {
            out.push_back("sample " + std::to_string(s.id) + ": unknown answer object_id " +
                          std::to_string(id));
        }
    }
    if (s.page_range.first > s.page_range.second) {
        out.push_back("sample " + std::to_string(s.id) + ": page_range start exceeds end");
    }
    bool visual =
        s.super_section == SuperSection::Table || s.super_section == SuperSection::Figure;
    if (visual && s.context.has_value()) {
        out.push_back("sample " + std::to_string(s.id) + ": visual question carries context");
    }
    if (!visual && !s.context.has_value()) {
        out.push_back("sample " + std::to_string(s.id) + ": paragraph question missing context");
    }
    return out;
}

}  // namespace pdfmvqa
