// Document ingestion: raw layout regions (from a PDF text layer or a
// pre-extracted region dump) are fuzz-matched against the article's
// structured XML nodes, typed, ordered by a deterministic reading-order
// rule and assembled into a validated DocumentRecord.
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "pdfmvqa/docmodel.hpp"
#include "pdfmvqa/pdf.hpp"
#include "pdfmvqa/xml.hpp"

namespace pdfmvqa::ingest {

enum class RegionKind { Textbox, Textline, Image, Shape };

inline const char* to_string(RegionKind k) {
    switch (k) {
        case RegionKind::Textbox: return "textbox";
        case RegionKind::Textline: return "textline";
        case RegionKind::Image: return "image";
        case RegionKind::Shape: return "shape";
    }
    return "?";
}

inline RegionKind region_kind_from_string(const std::string& s) {
    if (s == "textbox") return RegionKind::Textbox;
    if (s == "textline") return RegionKind::Textline;
    if (s == "image") return RegionKind::Image;
    if (s == "shape") return RegionKind::Shape;
    throw std::invalid_argument("unknown region kind: " + s);
}

struct RawRegion {
    RegionKind kind = RegionKind::Textbox;
    BBox bbox;
    std::string text;  // empty for image/shape
    int page_index = 0;
};

struct PageLayout {
    std::string page_name;
    double width = 0.0;
    double height = 0.0;
    std::vector<RawRegion> regions;
};

// One structured-XML node. section_path[0] is the first-level section title,
// lowercased; front-matter nodes use the synthetic paths "title"/"abstract".
struct XmlNode {
    std::string node_type;  // article-title, abstract, section-title, paragraph,
                            // list, fig-caption, table-caption
    std::string text;
    std::vector<std::string> section_path;
};

struct AlignmentConfig {
    double similarity_threshold = 0.85;
    // normalizer: lowercase + whitespace collapse (+ soft-hyphen strip)
};

// ---------------------------------------------------------------------------
// Text normalization and fuzzy similarity
// ---------------------------------------------------------------------------

// Lowercase, collapse whitespace runs to one space, trim, drop soft hyphens
// (U+00AD) left over from PDF line wrapping.
inline std::string normalize_text(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool in_ws = true;
    for (std::size_t i = 0; i < s.size(); ++i) {
        unsigned char c = static_cast<unsigned char>(s[i]);
        if (c == 0xC2 && i + 1 < s.size() && static_cast<unsigned char>(s[i + 1]) == 0xAD) {
            ++i;  // soft hyphen
            continue;
        }
        if (std::isspace(c)) {
            if (!in_ws) out += ' ';
            in_ws = true;
        } else {
            out += static_cast<char>(std::tolower(c));
            in_ws = false;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

// Indel-normalized edit similarity: 2*LCS(a,b) / (|a|+|b|), the ratio used by
// the usual fuzzy string matchers. 1.0 iff the strings are equal.
inline double edit_similarity(const std::string& a, const std::string& b) {
    if (a.empty() && b.empty()) return 1.0;
    if (a.empty() || b.empty()) return 0.0;
    const std::size_t n = a.size(), m = b.size();
    std::vector<int> prev(m + 1, 0), cur(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return 2.0 * static_cast<double>(prev[m]) / static_cast<double>(n + m);
}

// Cheap upper bound used to skip hopeless candidates: LCS <= min(|a|,|b|).
inline double similarity_upper_bound(std::size_t la, std::size_t lb) {
    if (la == 0 && lb == 0) return 1.0;
    return 2.0 * static_cast<double>(std::min(la, lb)) / static_cast<double>(la + lb);
}

// ---------------------------------------------------------------------------
// Layout sources
// ---------------------------------------------------------------------------

// Born-digital PDF path. Scanned PDFs surface as a "no text layer" error;
// OCR output enters through the region-dump path instead.
inline std::vector<PageLayout> extract_layout(const std::string& pdf_bytes) {
    pdf::Document doc = pdf::extract(pdf_bytes);  // throws ParseError / NoTextLayer
    std::vector<PageLayout> out;
    for (std::size_t p = 0; p < doc.pages.size(); ++p) {
        PageLayout layout;
        layout.page_name = "page_" + std::to_string(p);
        layout.width = doc.pages[p].width;
        layout.height = doc.pages[p].height;
        for (const pdf::PageItem& item : doc.pages[p].items) {
            RawRegion r;
            switch (item.kind) {
                case pdf::ItemKind::Text: r.kind = RegionKind::Textbox; break;
                case pdf::ItemKind::Image: r.kind = RegionKind::Image; break;
                case pdf::ItemKind::Shape: r.kind = RegionKind::Shape; break;
            }
            r.bbox = BBox{item.x, item.y, item.w, item.h};
            r.text = item.text;
            r.page_index = static_cast<int>(p);
            layout.regions.push_back(std::move(r));
        }
        out.push_back(std::move(layout));
    }
    return out;
}

// Region-dump input: JSON array of pages, each
// {"page_name", "width", "height", "regions": [{"kind", "bbox", "text"}]}.
inline std::vector<PageLayout> read_region_dump(const nlohmann::json& root) {
    if (!root.is_array()) throw std::invalid_argument("region dump root must be an array");
    std::vector<PageLayout> out;
    for (std::size_t p = 0; p < root.size(); ++p) {
        const auto& pj = root[p];
        PageLayout layout;
        layout.page_name = pj.at("page_name").get<std::string>();
        layout.width = pj.at("width").get<double>();
        layout.height = pj.at("height").get<double>();
        for (const auto& rj : pj.at("regions")) {
            RawRegion r;
            r.kind = region_kind_from_string(rj.at("kind").get<std::string>());
            const auto& bb = rj.at("bbox");
            r.bbox = BBox{bb.at(0).get<double>(), bb.at(1).get<double>(), bb.at(2).get<double>(),
                          bb.at(3).get<double>()};
            r.text = rj.value("text", std::string{});
            if ((r.kind == RegionKind::Image || r.kind == RegionKind::Shape) && !r.text.empty()) {
                throw std::invalid_argument("page " + std::to_string(p) +
                                            ": image/shape region with text");
            }
            r.page_index = static_cast<int>(p);
            layout.regions.push_back(std::move(r));
        }
        out.push_back(std::move(layout));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Structured-XML adapter
// ---------------------------------------------------------------------------

inline EntityCategory category_for_node_type(const std::string& node_type) {
    if (node_type == "article-title") return EntityCategory::Title;
    if (node_type == "abstract") return EntityCategory::Abstract;
    if (node_type == "section-title") return EntityCategory::Section;
    if (node_type == "paragraph") return EntityCategory::Paragraph;
    if (node_type == "list") return EntityCategory::List;
    if (node_type == "fig-caption") return EntityCategory::FigureCaption;
    if (node_type == "table-caption") return EntityCategory::TableCaption;
    throw std::invalid_argument("unknown node_type: " + node_type);
}

namespace detail {

inline void walk_section(const xml::Element& sec, std::vector<std::string> path,
                         std::vector<XmlNode>& out) {
    std::string title;
    if (const xml::Element* t = sec.find("title")) title = xml::collect_text(*t);
    if (!title.empty()) {
        path.push_back(normalize_text(title));
        out.push_back(XmlNode{"section-title", title, path});
    }
    for (const xml::Element& ch : sec.children) {
        if (ch.name == "sec") {
            walk_section(ch, path, out);
        } else if (ch.name == "p") {
            std::string text = xml::collect_text(ch);
            if (!text.empty()) out.push_back(XmlNode{"paragraph", text, path});
        } else if (ch.name == "list") {
            std::string text = xml::collect_text(ch);
            if (!text.empty()) out.push_back(XmlNode{"list", text, path});
        } else if (ch.name == "fig" || ch.name == "table-wrap") {
            if (const xml::Element* cap = ch.find("caption")) {
                std::string text = xml::collect_text(*cap);
                if (!text.empty()) {
                    out.push_back(XmlNode{
                        ch.name == "fig" ? "fig-caption" : "table-caption", text, path});
                }
            }
        }
    }
}

}  // namespace detail

// Extracts (node_type, text, section_path) triples from a structured
// full-text article: title and abstract from the front matter, then the body
// section tree with figure/table captions.
inline std::vector<XmlNode> xml_nodes_from_article(const xml::Element& article) {
    std::vector<XmlNode> out;
    std::function<const xml::Element*(const xml::Element&, const std::string&)> find_deep =
        [&](const xml::Element& e, const std::string& name) -> const xml::Element* {
        if (e.name == name) return &e;
        for (const xml::Element& c : e.children) {
            if (const xml::Element* hit = find_deep(c, name)) return hit;
        }
        return nullptr;
    };
    if (const xml::Element* t = find_deep(article, "article-title")) {
        std::string text = xml::collect_text(*t);
        if (!text.empty()) out.push_back(XmlNode{"article-title", text, {"title"}});
    }
    if (const xml::Element* abs = find_deep(article, "abstract")) {
        bool any_p = false;
        for (const xml::Element& ch : abs->children) {
            if (ch.name == "p") {
                std::string text = xml::collect_text(ch);
                if (!text.empty()) {
                    out.push_back(XmlNode{"abstract", text, {"abstract"}});
                    any_p = true;
                }
            }
        }
        if (!any_p) {
            std::string text = xml::collect_text(*abs);
            if (!text.empty()) out.push_back(XmlNode{"abstract", text, {"abstract"}});
        }
    }
    if (const xml::Element* body = find_deep(article, "body")) {
        for (const xml::Element& ch : body->children) {
            if (ch.name == "sec") detail::walk_section(ch, {}, out);
        }
    }
    return out;
}

inline std::vector<XmlNode> xml_nodes_from_string(const std::string& xml_text) {
    return xml_nodes_from_article(xml::parse(xml_text));
}

// ---------------------------------------------------------------------------
// Region/XML alignment
// ---------------------------------------------------------------------------

// Matches each text region to the highest-similarity XML node at or above
// the threshold; matched regions become typed entities carrying the node's
// canonical text and first-level section tag. Unmatched text regions are
// dropped (and logged). Image regions become Figure entities; table-grid
// shape clusters are handled by detect_table_regions.
inline std::vector<DocEntity> align_xml_text(const std::vector<RawRegion>& regions,
                                             const std::vector<XmlNode>& nodes,
                                             const AlignmentConfig& cfg,
                                             std::vector<std::string>* log = nullptr) {
    if (cfg.similarity_threshold <= 0.0 || cfg.similarity_threshold > 1.0) {
        throw std::invalid_argument("similarity threshold must lie in (0, 1]");
    }
    std::vector<std::string> norm_nodes(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) norm_nodes[i] = normalize_text(nodes[i].text);

    std::vector<DocEntity> out;
    for (const RawRegion& region : regions) {
        if (region.kind == RegionKind::Image) {
            DocEntity e;
            e.category = EntityCategory::Figure;
            e.bbox = region.bbox;
            e.page_index = region.page_index;
            out.push_back(std::move(e));
            continue;
        }
        if (region.kind == RegionKind::Shape) continue;  // handled by grid detection
        std::string norm = normalize_text(region.text);
        int best = -1;
        double best_sim = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (similarity_upper_bound(norm.size(), norm_nodes[i].size()) <
                cfg.similarity_threshold) {
                continue;
            }
            double sim = edit_similarity(norm, norm_nodes[i]);
            if (sim > best_sim) {
                best_sim = sim;
                best = static_cast<int>(i);
            }
        }
        if (best < 0 || best_sim < cfg.similarity_threshold) {
            if (log) {
                log->push_back("unmatched region on page " + std::to_string(region.page_index) +
                               ": \"" + norm.substr(0, 40) + "\"");
            }
            continue;
        }
        const XmlNode& node = nodes[static_cast<std::size_t>(best)];
        DocEntity e;
        e.category = category_for_node_type(node.node_type);
        e.bbox = region.bbox;
        e.text = node.text;
        e.page_index = region.page_index;
        e.section = node.section_path.empty() ? std::string{} : node.section_path[0];
        out.push_back(std::move(e));
    }
    return out;
}

// A cluster of >= 4 thin axis-aligned segments with members in both
// orientations reads as a table grid; the cluster's bounding box becomes one
// Table entity.
inline std::vector<DocEntity> detect_table_regions(const std::vector<RawRegion>& regions) {
    struct Seg {
        BBox box;
        int page = 0;
        bool horizontal = false;
    };
    std::vector<Seg> segs;
    for (const RawRegion& r : regions) {
        if (r.kind != RegionKind::Shape) continue;
        double thin = std::min(r.bbox.w, r.bbox.h);
        if (thin > 3.0) continue;  // not a line segment
        segs.push_back(Seg{r.bbox, r.page_index, r.bbox.w >= r.bbox.h});
    }
    std::vector<int> parent(segs.size());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) {
        return parent[x] == x ? x : parent[x] = find(parent[x]);
    };
    auto touches = [](const BBox& a, const BBox& b) {
        constexpr double tol = 3.0;
        return a.x - tol <= b.right() && b.x - tol <= a.right() && a.y - tol <= b.bottom() &&
               b.y - tol <= a.bottom();
    };
    for (std::size_t i = 0; i < segs.size(); ++i) {
        for (std::size_t j = i + 1; j < segs.size(); ++j) {
            if (segs[i].page == segs[j].page && touches(segs[i].box, segs[j].box)) {
                parent[find(static_cast<int>(i))] = find(static_cast<int>(j));
            }
        }
    }
    std::map<int, std::vector<const Seg*>> clusters;
    for (std::size_t i = 0; i < segs.size(); ++i) {
        clusters[find(static_cast<int>(i))].push_back(&segs[i]);
    }
    std::vector<DocEntity> out;
    for (const auto& [root, members] : clusters) {
        int n_h = 0, n_v = 0;
        for (const Seg* s : members) (s->horizontal ? n_h : n_v) += 1;
        if (members.size() < 4 || n_h < 2 || n_v < 2) continue;
        double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
        for (const Seg* s : members) {
            x0 = std::min(x0, s->box.x);
            y0 = std::min(y0, s->box.y);
            x1 = std::max(x1, s->box.right());
            y1 = std::max(y1, s->box.bottom());
        }
        DocEntity e;
        e.category = EntityCategory::Table;
        e.bbox = BBox{x0, y0, x1 - x0, y1 - y0};
        e.page_index = members.front()->page;
        out.push_back(std::move(e));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reading order
// ---------------------------------------------------------------------------

namespace detail {

// Horizontal overlap ratio relative to the wider extent. Entities inside the
// same column score near 1; a full-width span measured against a half-width
// column scores below the 0.5 clustering bar and becomes its own band.
inline double h_overlap_ratio(const BBox& a, const BBox& b) {
    double overlap = std::min(a.right(), b.right()) - std::max(a.x, b.x);
    if (overlap <= 0) return 0.0;
    return overlap / std::max(a.w, b.w);
}

}  // namespace detail

// Assigns document-global 0-based object ids. Within a page, entities are
// clustered into columns by >= 50% horizontal-extent overlap; clusters whose
// vertical ranges overlap form a band; bands run top to bottom, columns
// within a band left to right, entities within a column top to bottom. The
// result is invariant under permutations of the input.
inline std::vector<DocEntity> assign_reading_order(std::vector<DocEntity> entities) {
    auto entity_less = [](const DocEntity& a, const DocEntity& b) {
        return std::tie(a.bbox.y, a.bbox.x, a.bbox.h, a.bbox.w, a.text) <
               std::tie(b.bbox.y, b.bbox.x, b.bbox.h, b.bbox.w, b.text);
    };
    std::map<int, std::vector<DocEntity>> by_page;
    for (DocEntity& e : entities) by_page[e.page_index].push_back(std::move(e));

    std::vector<DocEntity> ordered;
    for (auto& [page, page_entities] : by_page) {
        auto& es = page_entities;
        const std::size_t n = es.size();
        std::vector<int> parent(n);
        std::iota(parent.begin(), parent.end(), 0);
        std::function<int(int)> find = [&](int x) {
            return parent[x] == x ? x : parent[x] = find(parent[x]);
        };
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                if (detail::h_overlap_ratio(es[i].bbox, es[j].bbox) >= 0.5) {
                    parent[find(static_cast<int>(i))] = find(static_cast<int>(j));
                }
            }
        }
        struct Cluster {
            std::vector<std::size_t> members;
            double min_x = 1e300, min_y = 1e300, max_y = -1e300;
        };
        std::map<int, Cluster> clusters;
        for (std::size_t i = 0; i < n; ++i) {
            Cluster& c = clusters[find(static_cast<int>(i))];
            c.members.push_back(i);
            c.min_x = std::min(c.min_x, es[i].bbox.x);
            c.min_y = std::min(c.min_y, es[i].bbox.y);
            c.max_y = std::max(c.max_y, es[i].bbox.bottom());
        }
        std::vector<Cluster*> cl;
        for (auto& [root, c] : clusters) cl.push_back(&c);

        // Band = connected component of clusters under vertical-range overlap.
        std::vector<int> band_parent(cl.size());
        std::iota(band_parent.begin(), band_parent.end(), 0);
        std::function<int(int)> bfind = [&](int x) {
            return band_parent[x] == x ? x : band_parent[x] = bfind(band_parent[x]);
        };
        for (std::size_t i = 0; i < cl.size(); ++i) {
            for (std::size_t j = i + 1; j < cl.size(); ++j) {
                if (cl[i]->min_y < cl[j]->max_y && cl[j]->min_y < cl[i]->max_y) {
                    band_parent[bfind(static_cast<int>(i))] = bfind(static_cast<int>(j));
                }
            }
        }
        struct Band {
            double min_y = 1e300;
            std::vector<Cluster*> columns;
        };
        std::map<int, Band> bands;
        for (std::size_t i = 0; i < cl.size(); ++i) {
            Band& b = bands[bfind(static_cast<int>(i))];
            b.columns.push_back(cl[i]);
            b.min_y = std::min(b.min_y, cl[i]->min_y);
        }
        std::vector<Band*> band_list;
        for (auto& [root, b] : bands) band_list.push_back(&b);
        std::sort(band_list.begin(), band_list.end(), [](const Band* a, const Band* b) {
            return std::tie(a->min_y, a->columns.front()->min_x) <
                   std::tie(b->min_y, b->columns.front()->min_x);
        });
        for (Band* band : band_list) {
            std::sort(band->columns.begin(), band->columns.end(),
                      [](const Cluster* a, const Cluster* b) {
                          return std::tie(a->min_x, a->min_y) < std::tie(b->min_x, b->min_y);
                      });
            for (Cluster* col : band->columns) {
                std::vector<DocEntity*> members;
                for (std::size_t idx : col->members) members.push_back(&es[idx]);
                std::sort(members.begin(), members.end(),
                          [&](const DocEntity* a, const DocEntity* b) {
                              return entity_less(*a, *b);
                          });
                for (DocEntity* e : members) ordered.push_back(std::move(*e));
            }
        }
    }
    for (std::size_t i = 0; i < ordered.size(); ++i) ordered[i].object_id = static_cast<int>(i);
    return ordered;
}

// ---------------------------------------------------------------------------
// Super-Section mapping
// ---------------------------------------------------------------------------

// Full first-level-title alignment table; lookups are exact on lowercased,
// trimmed titles and fall back to Other.
inline const std::map<std::string, SuperSection>& super_section_table() {
    static const std::map<std::string, SuperSection> table = {
        // Introduction and Backgrounds
        {"introduction", SuperSection::Intro},
        {"background", SuperSection::Intro},
        {"aim", SuperSection::Intro},
        // Methods and Materials
        {"materials and methods", SuperSection::MM},
        {"material and methods", SuperSection::MM},
        {"methods and materials", SuperSection::MM},
        {"data and methodologies", SuperSection::MM},
        {"subjects and methods", SuperSection::MM},
        {"patients and methods", SuperSection::MM},
        {"methods", SuperSection::MM},
        {"methodology", SuperSection::MM},
        {"research design and methods", SuperSection::MM},
        {"treatment", SuperSection::MM},
        {"data availability", SuperSection::MM},
        {"data availability statement", SuperSection::MM},
        {"experimental", SuperSection::MM},
        {"experimental section", SuperSection::MM},
        {"experimental procedures", SuperSection::MM},
        // Results and Discussion
        {"results", SuperSection::RD},
        {"result", SuperSection::RD},
        {"results and discussion", SuperSection::RD},
        {"results and discussions", SuperSection::RD},
        {"discussion", SuperSection::RD},
        {"discussions", SuperSection::RD},
        {"findings", SuperSection::RD},
        {"statistical analysis", SuperSection::RD},
        {"limitations", SuperSection::RD},
        {"study limitations", SuperSection::RD},
        {"strengths and limitations", SuperSection::RD},
        {"summary", SuperSection::RD},
        {"key points", SuperSection::RD},
        {"key summary points", SuperSection::RD},
        {"article highlights", SuperSection::RD},
        {"disclosures", SuperSection::RD},
        {"disclosure", SuperSection::RD},
        // Conclusion
        {"conclusions", SuperSection::Concl},
        {"conclusion", SuperSection::Concl},
        {"concluding remarks", SuperSection::Concl},
        {"discussion and conclusions", SuperSection::Concl},
        {"discussion and conclusion", SuperSection::Concl},
        {"future directions", SuperSection::Concl},
        {"future perspectives", SuperSection::Concl},
        // Other
        {"electronic supplementary material", SuperSection::Other},
        {"supplementary material", SuperSection::Other},
        {"supplemental material", SuperSection::Other},
        {"supplementary data", SuperSection::Other},
        {"supplementary", SuperSection::Other},
        {"supplementary information", SuperSection::Other},
        {"supplementary materials", SuperSection::Other},
        {"conflict of interest", SuperSection::Other},
        {"conflicts of interest", SuperSection::Other},
        {"declarations", SuperSection::Other},
        {"declaration of competing interest", SuperSection::Other},
        {"conflict of interest statement", SuperSection::Other},
        {"competing interests", SuperSection::Other},
        {"conflict of interests", SuperSection::Other},
        {"declaration of interest", SuperSection::Other},
        {"funding", SuperSection::Other},
        {"funding information", SuperSection::Other},
        {"supporting information", SuperSection::Other},
        {"funding sources", SuperSection::Other},
        {"sources of funding", SuperSection::Other},
        {"credit authorship contribution statement", SuperSection::Other},
        {"author contributions", SuperSection::Other},
        {"author contribution statement", SuperSection::Other},
        {"author contribution", SuperSection::Other},
        {"acknowledgments", SuperSection::Other},
        {"acknowledgements", SuperSection::Other},
        {"ethical approval", SuperSection::Other},
    };
    return table;
}

// Lowercased, trimmed first-level title -> Super-Section. The reserved
// "table"/"figure" titles tag visual-entity questions.
inline SuperSection map_super_section(const std::string& first_level_title) {
    std::string key = normalize_text(first_level_title);
    if (key == "table") return SuperSection::Table;
    if (key == "figure") return SuperSection::Figure;
    const auto& table = super_section_table();
    auto it = table.find(key);
    return it == table.end() ? SuperSection::Other : it->second;
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

// Entities must already be ordered and categorized (object_id = reading
// rank). Throws when the assembled record fails validation.
inline DocumentRecord build_document(const std::string& document_id,
                                     std::vector<DocPage> pages,
                                     const std::vector<DocEntity>& entities) {
    if (entities.empty()) {
        throw std::invalid_argument("document " + document_id + " has no entities");
    }
    DocumentRecord doc;
    doc.document_id = document_id;
    doc.pages = std::move(pages);
    for (DocPage& p : doc.pages) p.entity_ids.clear();
    for (const DocEntity& e : entities) {
        if (e.page_index < 0 || e.page_index >= static_cast<int>(doc.pages.size())) {
            throw std::invalid_argument("entity " + std::to_string(e.object_id) +
                                        " references page " + std::to_string(e.page_index) +
                                        " of " + std::to_string(doc.pages.size()));
        }
        doc.pages[static_cast<std::size_t>(e.page_index)].entity_ids.push_back(e.object_id);
        doc.entities[e.object_id] = e;
    }
    std::vector<std::string> violations = validate_document(doc);
    if (!violations.empty()) {
        std::string msg = "document " + document_id + " failed validation:";
        for (const std::string& v : violations) msg += "\n  " + v;
        throw std::runtime_error(msg);
    }
    return doc;
}

// Full per-document pipeline: align text regions against XML nodes, add
// figures and detected table grids, order, and assemble.
inline DocumentRecord ingest_document(const std::string& document_id,
                                      const std::vector<PageLayout>& layout,
                                      const std::vector<XmlNode>& nodes,
                                      const AlignmentConfig& cfg,
                                      std::vector<std::string>* log = nullptr) {
    std::vector<RawRegion> regions;
    std::vector<DocPage> pages;
    for (const PageLayout& pl : layout) {
        pages.push_back(DocPage{pl.page_name, pl.width, pl.height, {}});
        regions.insert(regions.end(), pl.regions.begin(), pl.regions.end());
    }
    std::vector<DocEntity> entities = align_xml_text(regions, nodes, cfg, log);
    std::vector<DocEntity> tables = detect_table_regions(regions);
    entities.insert(entities.end(), tables.begin(), tables.end());

    // Visual entities inherit the section tag of the nearest caption on the
    // same page, when one exists.
    for (DocEntity& e : entities) {
        if (e.category != EntityCategory::Figure && e.category != EntityCategory::Table) continue;
        EntityCategory want = e.category == EntityCategory::Figure
                                  ? EntityCategory::FigureCaption
                                  : EntityCategory::TableCaption;
        double best_d = 1e300;
        const DocEntity* best = nullptr;
        for (const DocEntity& cap : entities) {
            if (cap.category != want || cap.page_index != e.page_index) continue;
            double dy = std::abs((cap.bbox.y + cap.bbox.h / 2) - (e.bbox.y + e.bbox.h / 2));
            if (dy < best_d) {
                best_d = dy;
                best = &cap;
            }
        }
        if (best) e.section = best->section;
    }

    entities = assign_reading_order(std::move(entities));
    return build_document(document_id, std::move(pages), entities);
}

}  // namespace pdfmvqa::ingest
