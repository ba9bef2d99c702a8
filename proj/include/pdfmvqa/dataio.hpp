// Dataset serialization: per-split question tables (CSV), per-split document
// metadata (canonical JSON) and deterministic document-level split creation.
//
// The CSV cell syntax mirrors the released dataset exactly: answer id lists
// render as `[7, 8]`, page ranges as `(0, 1)`, and table/figure rows leave
// the context cell empty. The super_section column stores the raw
// first-level section title ("results and discussion", "table", ...); the
// enum view is derived at load time by the consumer.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdfmvqa/docmodel.hpp"

namespace pdfmvqa::dataio {

struct SplitRow {
    std::string question;
    std::string document_id;
    std::vector<int> answer_objt_id;  // non-empty, written in ascending order
    std::string super_section;        // raw title, e.g. "introduction", "table"
    std::int64_t id = 0;
    std::pair<int, int> page_range{0, 0};
    std::optional<std::string> context;  // absent exactly for table/figure rows
};

struct SplitTable {
    std::vector<SplitRow> rows;
};

inline constexpr const char* kSplitHeader =
    "question,document_id,answer_objt_id,super_section,id,page_range,context";

class ParseError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace detail {

// Writers take an exclusive in-process lock per target path.
inline std::mutex& file_lock(const std::string& path) {
    static std::mutex registry_mutex;
    static std::map<std::string, std::unique_ptr<std::mutex>> registry;
    std::lock_guard<std::mutex> g(registry_mutex);
    auto& slot = registry[path];
    if (!slot) slot = std::make_unique<std::mutex>();
    return *slot;
}

inline bool needs_quotes(const std::string& cell) {
    return cell.find_first_of(",\"\n\r") != std::string::npos;
}

inline std::string quote_csv(const std::string& cell) {
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

inline std::string render_cell(const std::string& cell) {
    return needs_quotes(cell) ? quote_csv(cell) : cell;
}

// Splits one CSV record starting at `pos`; handles quoted cells with embedded
// separators and newlines. Advances `pos` past the record terminator.
inline std::vector<std::string> next_record(const std::string& text, std::size_t& pos,
                                            std::vector<bool>* quoted_out = nullptr) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted_cell = false;
    bool in_quotes = false;
    auto push = [&]() {
        cells.push_back(cell);
        if (quoted_out) quoted_out->push_back(quoted_cell);
        cell.clear();
        quoted_cell = false;
    };
    while (pos < text.size()) {
        char c = text[pos];
        if (in_quotes) {
            if (c == '"') {
                if (pos + 1 < text.size() && text[pos + 1] == '"') {
                    cell += '"';
                    ++pos;
                } else {
                    in_quotes = false;
                }
            } else {
                cell += c;
            }
            ++pos;
            continue;
        }
        if (c == '"' && cell.empty()) {
            in_quotes = true;
            quoted_cell = true;
            ++pos;
        } else if (c == ',') {
            push();
            ++pos;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && pos + 1 < text.size() && text[pos + 1] == '\n') ++pos;
            ++pos;
            break;
        } else {
            cell += c;
            ++pos;
        }
    }
    push();
    return cells;
}

inline std::string render_answer_ids(const std::vector<int>& ids) {
    std::string s = "[";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(ids[i]);
    }
    s += "]";
    return s;
}

inline std::string render_page_range(const std::pair<int, int>& pr) {
    return "(" + std::to_string(pr.first) + ", " + std::to_string(pr.second) + ")";
}

inline std::vector<int> parse_answer_ids(const std::string& cell, std::size_t row) {
    std::string s = cell;
    if (s.size() < 2 || s.front() != '[' || s.back() != ']') {
        throw ParseError("row " + std::to_string(row) + ": malformed answer_objt_id cell '" +
                         cell + "'");
    }
    s = s.substr(1, s.size() - 2);
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(std::stoi(tok));
        } catch (const std::exception&) {
            throw ParseError("row " + std::to_string(row) + ": bad id '" + tok +
                             "' in answer_objt_id");
        }
    }
    if (out.empty()) {
        throw ParseError("row " + std::to_string(row) + ": empty answer_objt_id list");
    }
    return out;
}

inline std::pair<int, int> parse_page_range(const std::string& cell, std::size_t row) {
    std::string s = cell;
    if (s.size() < 2 || s.front() != '(' || s.back() != ')') {
        throw ParseError("row " + std::to_string(row) + ": malformed page_range cell '" + cell +
                         "'");
    }
    s = s.substr(1, s.size() - 2);
    auto comma = s.find(',');
    if (comma == std::string::npos) {
        throw ParseError("row " + std::to_string(row) + ": page_range needs two values");
    }
    try {
        int a = std::stoi(s.substr(0, comma));
        int b = std::stoi(s.substr(comma + 1));
        return {a, b};
    } catch (const std::exception&) {
        throw ParseError("row " + std::to_string(row) + ": bad page_range '" + cell + "'");
    }
}

}  // namespace detail

inline std::string render_split(const SplitTable& table) {
    std::string out = std::string(kSplitHeader) + "\n";
    for (const SplitRow& r : table.rows) {
        out += detail::render_cell(r.question);
        out += ',';
        out += detail::render_cell(r.document_id);
        out += ',';
        out += detail::render_cell(detail::render_answer_ids(r.answer_objt_id));
        out += ',';
        out += detail::render_cell(r.super_section);
        out += ',';
        out += std::to_string(r.id);
        out += ',';
        out += detail::render_cell(detail::render_page_range(r.page_range));
        out += ',';
        // A present-but-empty context is written quoted so it stays
        // distinguishable from the null cell of table/figure rows.
        if (r.context.has_value()) {
            out += r.context->empty() ? "\"\"" : detail::render_cell(*r.context);
        }
        out += '\n';
    }
    return out;
}

inline void write_split(const SplitTable& table, const std::filesystem::path& path) {
    std::lock_guard<std::mutex> g(detail::file_lock(path.string()));
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f << render_split(table);
}

inline SplitTable parse_split(const std::string& text) {
    SplitTable table;
    std::size_t pos = 0;
    std::size_t row_no = 1;
    std::vector<std::string> header = detail::next_record(text, pos);
    {
        std::string joined;
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) joined += ',';
            joined += header[i];
        }
        if (joined != kSplitHeader) throw ParseError("unexpected split header: " + joined);
    }
    std::set<std::int64_t> seen_ids;
    while (pos < text.size()) {
        ++row_no;
        std::vector<bool> quoted;
        std::vector<std::string> cells = detail::next_record(text, pos, &quoted);
        if (cells.size() == 1 && cells[0].empty()) continue;  // trailing blank line
        if (cells.size() != 7) {
            throw ParseError("row " + std::to_string(row_no) + ": expected 7 cells, got " +
                             std::to_string(cells.size()));
        }
        SplitRow r;
        r.question = cells[0];
        r.document_id = cells[1];
        r.answer_objt_id = detail::parse_answer_ids(cells[2], row_no);
        r.super_section = cells[3];
        try {
            r.id = std::stoll(cells[4]);
        } catch (const std::exception&) {
            throw ParseError("row " + std::to_string(row_no) + ": bad id cell '" + cells[4] + "'");
        }
        r.page_range = detail::parse_page_range(cells[5], row_no);
        if (!cells[6].empty() || quoted[6]) r.context = cells[6];
        if (!seen_ids.insert(r.id).second) {
            throw ParseError("row " + std::to_string(row_no) + ": duplicate question id " +
                             cells[4]);
        }
        table.rows.push_back(std::move(r));
    }
    return table;
}

inline SplitTable read_split(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_split(ss.str());
}

// ---------------------------------------------------------------------------
// Metadata store
// ---------------------------------------------------------------------------

// document_id -> full page/entity annotation, the JSON counterpart of the
// dataset's per-split metadata file.
struct MetadataStore {
    std::map<std::string, DocumentRecord> documents;
};

inline nlohmann::json metadata_to_json(const MetadataStore& store) {
    nlohmann::json root = nlohmann::json::object();
    for (const auto& [doc_id, doc] : store.documents) {
        nlohmann::json pages = nlohmann::json::array();
        for (const DocPage& p : doc.pages) {
            nlohmann::json objects = nlohmann::json::array();
            for (int id : p.entity_ids) {
                const DocEntity& e = doc.entity(id);
                nlohmann::json o;
                o["bbox"] = {e.bbox.x, e.bbox.y, e.bbox.w, e.bbox.h};
                o["text"] = e.text;
                o["object_id"] = e.object_id;
                o["category"] = to_string(e.category);
                if (!e.section.empty()) o["section"] = e.section;
                objects.push_back(std::move(o));
            }
            pages.push_back(nlohmann::json{
                {"page_name", p.page_name}, {"size", {p.width, p.height}}, {"objects", objects}});
        }
        root[doc_id] = nlohmann::json{{"page_info", pages}};
    }
    return root;
}

// Canonical form: sorted keys (nlohmann objects are key-ordered), two-space
// indent, LF newlines, trailing newline.
inline std::string render_metadata(const MetadataStore& store) {
    return metadata_to_json(store).dump(2) + "\n";
}

inline void write_metadata(const MetadataStore& store, const std::filesystem::path& path) {
    std::lock_guard<std::mutex> g(detail::file_lock(path.string()));
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f << render_metadata(store);
}

inline MetadataStore metadata_from_json(const nlohmann::json& root) {
    MetadataStore store;
    if (!root.is_object()) throw ParseError("metadata root must be an object");
    for (const auto& [doc_id, doc_json] : root.items()) {
        DocumentRecord doc;
        doc.document_id = doc_id;
        if (!doc_json.contains("page_info") || !doc_json["page_info"].is_array()) {
            throw ParseError(doc_id + ": missing page_info array");
        }
        const auto& pages = doc_json["page_info"];
        for (std::size_t pi = 0; pi < pages.size(); ++pi) {
            const auto& pj = pages[pi];
            std::string where = doc_id + ".page_info[" + std::to_string(pi) + "]";
            DocPage page;
            try {
                page.page_name = pj.at("page_name").get<std::string>();
                page.width = pj.at("size").at(0).get<double>();
                page.height = pj.at("size").at(1).get<double>();
            } catch (const nlohmann::json::exception&) {
                throw ParseError(where + ": bad page_name/size");
            }
            if (page.width <= 0 || page.height <= 0) {
                throw ParseError(where + ".size: non-positive page size");
            }
            if (!pj.contains("objects") || !pj["objects"].is_array()) {
                throw ParseError(where + ": missing objects array");
            }
            const auto& objects = pj["objects"];
            for (std::size_t oi = 0; oi < objects.size(); ++oi) {
                const auto& oj = objects[oi];
                std::string owhere = where + ".objects[" + std::to_string(oi) + "]";
                DocEntity e;
                try {
                    const auto& bb = oj.at("bbox");
                    e.bbox = BBox{bb.at(0).get<double>(), bb.at(1).get<double>(),
                                  bb.at(2).get<double>(), bb.at(3).get<double>()};
                    e.text = oj.at("text").get<std::string>();
                    e.object_id = oj.at("object_id").get<int>();
                    e.category = entity_category_from_string(oj.at("category").get<std::string>());
                } catch (const std::exception& ex) {
                    throw ParseError(owhere + ": " + ex.what());
                }
                if (oj.contains("section")) e.section = oj["section"].get<std::string>();
                if (e.bbox.x < 0 || e.bbox.y < 0) {
                    throw ParseError(owhere + ".bbox: negative coordinate");
                }
                if (e.bbox.w <= 0 || e.bbox.h <= 0) {
                    throw ParseError(owhere + ".bbox: non-positive extent");
                }
                e.page_index = static_cast<int>(pi);
                if (doc.entities.count(e.object_id)) {
                    throw ParseError(owhere + ": duplicate object_id " +
                                     std::to_string(e.object_id));
                }
                page.entity_ids.push_back(e.object_id);
                doc.entities[e.object_id] = std::move(e);
            }
            doc.pages.push_back(std::move(page));
        }
        store.documents[doc_id] = std::move(doc);
    }
    return store;
}

inline MetadataStore read_metadata(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    nlohmann::json root;
    try {
        f >> root;
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(path.string() + ": " + ex.what());
    }
    return metadata_from_json(root);
}

// Every answer id of every row must resolve in the split's metadata store.
inline std::vector<std::string> validate_split(const SplitTable& table,
                                               const MetadataStore& store) {
    std::vector<std::string> out;
    for (const SplitRow& r : table.rows) {
        auto it = store.documents.find(r.document_id);
        if (it == store.documents.end()) {
            out.push_back("question " + std::to_string(r.id) + ": unknown document " +
                          r.document_id);
            continue;
        }
        for (int id : r.answer_objt_id) {
            if (!it->second.entities.count(id)) {
                out.push_back("question " + std::to_string(r.id) + ": answer id " +
                              std::to_string(id) + " missing from " + r.document_id);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Split creation
// ---------------------------------------------------------------------------

struct SplitRatios {
    double train = 0.70216;
    double val = 0.09981;
    double test = 0.19803;
};

struct Splits {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
};

// Document-level disjoint partition. Val and test sizes floor their ratio
// shares; every leftover document goes to train. The shuffle is a fixed
// Fisher-Yates so the partition is identical across platforms for a seed.
inline Splits make_splits(std::vector<std::string> doc_ids, const SplitRatios& ratios,
                          std::uint64_t seed) {
    if (doc_ids.empty()) throw std::invalid_argument("make_splits: empty corpus");
    double sum = ratios.train + ratios.val + ratios.test;
    if (std::abs(sum - 1.0) > 1e-6) {
        throw std::invalid_argument("make_splits: ratios must sum to 1");
    }
    std::mt19937_64 rng(seed);
    for (std::size_t i = doc_ids.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(doc_ids[i - 1], doc_ids[j]);
    }
    const auto n = static_cast<double>(doc_ids.size());
    auto n_val = static_cast<std::size_t>(n * ratios.val);
    auto n_test = static_cast<std::size_t>(n * ratios.test);
    if (n_val + n_test > doc_ids.size()) throw std::invalid_argument("make_splits: bad ratios");
    std::size_t n_train = doc_ids.size() - n_val - n_test;

    Splits s;
    s.train.assign(doc_ids.begin(), doc_ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(doc_ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                 doc_ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(doc_ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), doc_ids.end());
    return s;
}

}  // namespace pdfmvqa::dataio
