// Minimal born-digital PDF layout extractor. Parses classic cross-reference
// PDFs (uncompressed or FlateDecode streams), walks the page tree and
// interprets the text/image/path subset of the content stream language:
// BT/ET blocks with Tf/Td/TD/Tm/T*/Tj/'/TJ, q/Q/cm, Do for image XObjects and
// re + paint for rectangle shapes. Coordinates are converted to a top-left
// origin. Rotated or skewed content and non-Flate filters are out of scope;
// image-only documents are reported as having no text layer.
#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <zlib.h>

namespace pdfmvqa::pdf {

class ParseError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class NoTextLayer : public std::runtime_error {
  public:
    NoTextLayer() : std::runtime_error("no text layer") {}
};

enum class ItemKind { Text, Image, Shape };

struct PageItem {
    ItemKind kind = ItemKind::Text;
    double x = 0, y = 0, w = 0, h = 0;  // top-left origin, page units
    std::string text;
};

struct Page {
    double width = 612.0;
    double height = 792.0;
    std::vector<PageItem> items;
};

struct Document {
    std::vector<Page> pages;
};

namespace detail {

struct Ref {
    int id = 0;
};

struct Value;
using Array = std::vector<Value>;
using Dict = std::map<std::string, Value>;

struct Value {
    std::variant<std::monostate, double, bool, std::string /*literal*/,
                 std::string /*placeholder*/, Ref, std::shared_ptr<Array>, std::shared_ptr<Dict>>
        v;
    bool is_name = false;  // distinguishes /Name from (string)

    bool is_null() const { return std::holds_alternative<std::monostate>(v); }
    bool is_num() const { return std::holds_alternative<double>(v); }
    bool is_ref() const { return std::holds_alternative<Ref>(v); }
    bool is_dict() const { return std::holds_alternative<std::shared_ptr<Dict>>(v); }
    bool is_array() const { return std::holds_alternative<std::shared_ptr<Array>>(v); }
    bool is_string() const { return v.index() == 3; }
    double num() const { return std::get<double>(v); }
    const std::string& str() const { return std::get<3>(v); }
    const Dict& dict() const { return *std::get<std::shared_ptr<Dict>>(v); }
    const Array& array() const { return *std::get<std::shared_ptr<Array>>(v); }
};

struct Object {
    Value value;
    std::string stream;  // raw stream bytes, empty if none
    bool has_stream = false;
};

struct Lexer {
    const std::string& src;
    std::size_t pos = 0;

    bool eof() const { return pos >= src.size(); }
    char peek() const { return pos < src.size() ? src[pos] : '\0'; }
    void skip_ws() {
        while (!eof()) {
            char c = src[pos];
            if (c == '%') {  // comment to end of line
                while (!eof() && src[pos] != '\n' && src[pos] != '\r') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos;
            } else {
                break;
            }
        }
    }
};

inline bool is_delim(char c) {
    return c == '(' || c == ')' || c == '<' || c == '>' || c == '[' || c == ']' || c == '{' ||
           c == '}' || c == '/' || c == '%';
}

inline std::string lex_token(Lexer& lx) {
    std::size_t start = lx.pos;
    while (!lx.eof() && !std::isspace(static_cast<unsigned char>(lx.src[lx.pos])) &&
           !is_delim(lx.src[lx.pos])) {
        ++lx.pos;
    }
    return lx.src.substr(start, lx.pos - start);
}

inline std::string parse_literal_string(Lexer& lx) {
    // lx.pos at '('
    ++lx.pos;
    std::string out;
    int depth = 1;
    while (!lx.eof()) {
        char c = lx.src[lx.pos++];
        if (c == '\\') {
            if (lx.eof()) break;
            char e = lx.src[lx.pos++];
            switch (e) {
                case 'n': out += '\n'; break;
                case 'r': out += '\r'; break;
                case 't': out += '\t'; break;
                case 'b': out += '\b'; break;
                case 'f': out += '\f'; break;
                case '(': out += '('; break;
                case ')': out += ')'; break;
                case '\\': out += '\\'; break;
                case '\n': break;  // line continuation
                default:
                    if (e >= '0' && e <= '7') {
                        int code = e - '0';
                        for (int k = 0; k < 2 && !lx.eof() && lx.src[lx.pos] >= '0' &&
                                        lx.src[lx.pos] <= '7';
                             ++k) {
                            code = code * 8 + (lx.src[lx.pos++] - '0');
                        }
                        out += static_cast<char>(code);
                    } else {
                        out += e;
                    }
            }
        } else if (c == '(') {
            ++depth;
            out += c;
        } else if (c == ')') {
            if (--depth == 0) return out;
            out += c;
        } else {
            out += c;
        }
    }
    throw ParseError("unterminated string literal");
}

inline std::string parse_hex_string(Lexer& lx) {
    // lx.pos at '<'
    ++lx.pos;
    std::string hex;
    while (!lx.eof() && lx.src[lx.pos] != '>') {
        char c = lx.src[lx.pos++];
        if (std::isxdigit(static_cast<unsigned char>(c))) hex += c;
    }
    if (lx.eof()) throw ParseError("unterminated hex string");
    ++lx.pos;
    if (hex.size() % 2) hex += '0';
    std::string out;
    for (std::size_t i = 0; i + 1 < hex.size() + 1 && i + 1 < hex.size() + 1; i += 2) {
        if (i + 1 >= hex.size()) break;
        out += static_cast<char>(std::stoi(hex.substr(i, 2), nullptr, 16));
    }
    return out;
}

inline Value parse_value(Lexer& lx);

inline Value parse_dict_or_hex(Lexer& lx) {
    if (lx.pos + 1 < lx.src.size() && lx.src[lx.pos + 1] == '<') {
        lx.pos += 2;
        auto dict = std::make_shared<Dict>();
        for (;;) {
            lx.skip_ws();
            if (lx.src.compare(lx.pos, 2, ">>") == 0) {
                lx.pos += 2;
                break;
            }
            if (lx.peek() != '/') throw ParseError("expected name key in dictionary");
            ++lx.pos;
            std::string key = lex_token(lx);
            lx.skip_ws();
            (*dict)[key] = parse_value(lx);
        }
        Value v;
        v.v = dict;
        return v;
    }
    Value v;
    v.v.emplace<3>(parse_hex_string(lx));
    return v;
}

inline Value parse_value(Lexer& lx) {
    lx.skip_ws();
    if (lx.eof()) throw ParseError("unexpected end of object");
    char c = lx.peek();
    if (c == '/') {
        ++lx.pos;
        Value v;
        v.v.emplace<3>(lex_token(lx));
        v.is_name = true;
        return v;
    }
    if (c == '(') {
        Value v;
        v.v.emplace<3>(parse_literal_string(lx));
        return v;
    }
    if (c == '<') return parse_dict_or_hex(lx);
    if (c == '[') {
        ++lx.pos;
        auto arr = std::make_shared<Array>();
        for (;;) {
            lx.skip_ws();
            if (lx.peek() == ']') {
                ++lx.pos;
                break;
            }
            arr->push_back(parse_value(lx));
        }
        Value v;
        v.v = arr;
        return v;
    }
    // number, ref, bool, null or keyword
    std::size_t save = lx.pos;
    std::string tok = lex_token(lx);
    if (tok.empty()) throw ParseError("stray delimiter in object");
    if (tok == "true" || tok == "false") {
        Value v;
        v.v = (tok == "true");
        return v;
    }
    if (tok == "null") return Value{};
    // Try "N G R" indirect reference.
    if (std::isdigit(static_cast<unsigned char>(tok[0]))) {
        Lexer probe = lx;
        probe.skip_ws();
        std::size_t p2 = probe.pos;
        std::string gen = lex_token(probe);
        probe.skip_ws();
        if (!gen.empty() && std::isdigit(static_cast<unsigned char>(gen[0])) &&
            probe.peek() == 'R') {
            std::size_t after = probe.pos + 1;
            // 'R' must be a standalone token
            if (after >= probe.src.size() ||
                std::isspace(static_cast<unsigned char>(probe.src[after])) ||
                is_delim(probe.src[after])) {
                lx.pos = after;
                Value v;
                v.v = Ref{std::stoi(tok)};
                return v;
            }
        }
        (void)p2;
    }
    try {
        Value v;
        v.v = std::stod(tok);
        return v;
    } catch (const std::exception&) {
        lx.pos = save + tok.size();
        throw ParseError("unexpected token '" + tok + "' in object");
    }
}

inline std::string inflate_stream(const std::string& in) {
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) throw ParseError("zlib init failed");
    std::string out;
    out.resize(std::max<std::size_t>(in.size() * 4, 1024));
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
    zs.avail_in = static_cast<uInt>(in.size());
    std::size_t written = 0;
    int rc = Z_OK;
    do {
        if (written == out.size()) out.resize(out.size() * 2);
        zs.next_out = reinterpret_cast<Bytef*>(out.data() + written);
        zs.avail_out = static_cast<uInt>(out.size() - written);
        rc = inflate(&zs, Z_NO_FLUSH);
        written = out.size() - zs.avail_out;
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw ParseError("FlateDecode failed");
        }
    } while (rc != Z_STREAM_END && zs.avail_in > 0);
    inflateEnd(&zs);
    out.resize(written);
    return out;
}

class File {
  public:
    explicit File(const std::string& bytes) : bytes_(bytes) {
        if (bytes_.compare(0, 5, "%PDF-") != 0) throw ParseError("missing %PDF header");
        scan_objects();
    }

    const Object* object(int id) const {
        auto it = objects_.find(id);
        return it == objects_.end() ? nullptr : &it->second;
    }

    // Follows indirect references until a direct value is reached.
    Value resolve(const Value& v) const {
        Value cur = v;
        int guard = 0;
        while (cur.is_ref()) {
            if (++guard > 64) throw ParseError("reference cycle");
            const Object* o = object(std::get<Ref>(cur.v).id);
            if (!o) throw ParseError("dangling object reference");
            cur = o->value;
        }
        return cur;
    }

    std::optional<Value> dict_get(const Dict& d, const std::string& key) const {
        auto it = d.find(key);
        if (it == d.end()) return std::nullopt;
        return resolve(it->second);
    }

    std::string decoded_stream(const Object& obj) const {
        if (!obj.has_stream) throw ParseError("object has no stream");
        if (!obj.value.is_dict()) throw ParseError("stream without dictionary");
        auto filter = dict_get(obj.value.dict(), "Filter");
        if (!filter) return obj.stream;
        auto apply = [&](const std::string& name, const std::string& data) {
            if (name == "FlateDecode") return inflate_stream(data);
            throw ParseError("unsupported stream filter " + name);
        };
        if (filter->is_string()) return apply(filter->str(), obj.stream);
        if (filter->is_array()) {
            std::string data = obj.stream;
            for (const Value& f : filter->array()) data = apply(resolve(f).str(), data);
            return data;
        }
        throw ParseError("bad Filter entry");
    }

    int root_id() const {
        // Last trailer wins; fall back to scanning for a Catalog.
        std::size_t at = bytes_.rfind("trailer");
        while (at != std::string::npos) {
            Lexer lx{bytes_, at + 7};
            try {
                Value t = parse_value(lx);
                if (t.is_dict()) {
                    auto it = t.dict().find("Root");
                    if (it != t.dict().end() && it->second.is_ref()) {
                        return std::get<Ref>(it->second.v).id;
                    }
                }
            } catch (const ParseError&) {
                // fall through to earlier trailer
            }
            at = at ? bytes_.rfind("trailer", at - 1) : std::string::npos;
        }
        for (const auto& [id, obj] : objects_) {
            if (obj.value.is_dict()) {
                auto type = dict_get(obj.value.dict(), "Type");
                if (type && type->is_string() && type->str() == "Catalog") return id;
            }
        }
        throw ParseError("no document catalog");
    }

  private:
    void scan_objects() {
        std::size_t pos = 0;
        while (pos < bytes_.size()) {
            // find "<num> <gen> obj"
            std::size_t at = bytes_.find(" obj", pos);
            std::size_t alt = bytes_.find("\nobj", pos);
            at = std::min(at, alt);
            if (at == std::string::npos) break;
            // Walk back over "<num> <gen>".
            std::size_t j = at;
            auto skip_back_ws = [&](std::size_t k) {
                while (k > 0 && std::isspace(static_cast<unsigned char>(bytes_[k - 1]))) --k;
                return k;
            };
            auto skip_back_digits = [&](std::size_t k) {
                while (k > 0 && std::isdigit(static_cast<unsigned char>(bytes_[k - 1]))) --k;
                return k;
            };
            std::size_t gen_end = j;
            std::size_t gen_start = skip_back_digits(gen_end);
            if (gen_start == gen_end) {
                pos = at + 4;
                continue;
            }
            std::size_t num_end = skip_back_ws(gen_start);
            std::size_t num_start = skip_back_digits(num_end);
            if (num_start == num_end) {
                pos = at + 4;
                continue;
            }
            int id = std::stoi(bytes_.substr(num_start, num_end - num_start));
            Lexer lx{bytes_, at + 4};
            Object obj;
            try {
                obj.value = parse_value(lx);
            } catch (const ParseError&) {
                pos = at + 4;
                continue;
            }
            lx.skip_ws();
            if (bytes_.compare(lx.pos, 6, "stream") == 0) {
                std::size_t s = lx.pos + 6;
                if (s < bytes_.size() && bytes_[s] == '\r') ++s;
                if (s < bytes_.size() && bytes_[s] == '\n') ++s;
                std::size_t end = bytes_.find("endstream", s);
                if (end == std::string::npos) throw ParseError("unterminated stream");
                std::size_t len = end - s;
                if (obj.value.is_dict()) {
                    auto it = obj.value.dict().find("Length");
                    if (it != obj.value.dict().end() && it->second.is_num()) {
                        len = std::min(len, static_cast<std::size_t>(it->second.num()));
                    }
                }
                obj.stream = bytes_.substr(s, len);
                obj.has_stream = true;
                lx.pos = end + 9;
            }
            objects_[id] = std::move(obj);
            pos = lx.pos;
        }
        if (objects_.empty()) throw ParseError("no objects found");
    }

    const std::string& bytes_;
    std::map<int, Object> objects_;
};

// 2-D affine transform (a b c d e f), PDF column-vector convention.
struct Matrix {
    double a = 1, b = 0, c = 0, d = 1, e = 0, f = 0;

    static Matrix translate(double tx, double ty) { return {1, 0, 0, 1, tx, ty}; }
    Matrix mul(const Matrix& m) const {  // this * m (apply this first)
        return {a * m.a + b * m.c,       a * m.b + b * m.d,       c * m.a + d * m.c,
                c * m.b + d * m.d,       e * m.a + f * m.c + m.e, e * m.b + f * m.d + m.f};
    }
    std::pair<double, double> apply(double x, double y) const {
        return {a * x + c * y + e, b * x + d * y + f};
    }
};

struct ContentState {
    Matrix ctm;
    std::vector<Matrix> stack;
    Matrix tm, tlm;
    double font_size = 12.0;
    double leading = 0.0;
};

// Average glyph advance as a fraction of the font size; matches typical
// Latin text closely enough for layout boxes.
inline constexpr double kGlyphAdvance = 0.5;

inline void interpret_content(const std::string& content, const File& file,
                              const Dict* xobjects, Page& page) {
    Lexer lx{content, 0};
    ContentState st;
    std::vector<Value> operands;
    bool in_text = false;

    // Accumulates one BT..ET block into a single text item.
    std::string block_text;
    double bx0 = 0, by0 = 0, bx1 = 0, by1 = 0;
    bool block_has_box = false;

    auto flush_block = [&]() {
        std::string trimmed = block_text;
        while (!trimmed.empty() && trimmed.back() == ' ') trimmed.pop_back();
        while (!trimmed.empty() && trimmed.front() == ' ') trimmed.erase(trimmed.begin());
        if (!trimmed.empty() && block_has_box) {
            PageItem item;
            item.kind = ItemKind::Text;
            item.x = std::max(0.0, bx0);
            double y_top = page.height - by1;
            item.y = std::max(0.0, y_top);
            item.w = std::max(1.0, bx1 - bx0);
            item.h = std::max(1.0, by1 - by0);
            item.w = std::min(item.w, page.width - item.x);
            item.h = std::min(item.h, page.height - item.y);
            item.text = trimmed;
            page.items.push_back(std::move(item));
        }
        block_text.clear();
        block_has_box = false;
    };

    auto show_string = [&](const std::string& s) {
        Matrix trm = st.tm.mul(st.ctm);
        double scale = std::hypot(trm.a, trm.b);
        if (scale == 0) scale = 1.0;
        double width = kGlyphAdvance * st.font_size * scale * static_cast<double>(s.size());
        auto [x, y] = trm.apply(0, 0);
        double x1 = x + width;
        double y0 = y - 0.2 * st.font_size * scale;
        double y1 = y + 0.8 * st.font_size * scale;
        if (!block_has_box) {
            bx0 = x;
            bx1 = x1;
            by0 = y0;
            by1 = y1;
            block_has_box = true;
        } else {
            bx0 = std::min(bx0, x);
            bx1 = std::max(bx1, x1);
            by0 = std::min(by0, y0);
            by1 = std::max(by1, y1);
        }
        if (!block_text.empty()) block_text += ' ';
        block_text += s;
        st.tm = Matrix::translate(width / (scale == 0 ? 1.0 : scale) * 1.0, 0).mul(st.tm);
    };

    std::vector<std::array<double, 4>> pending_rects;

    auto num = [&](std::size_t i) { return operands.at(i).num(); };

    for (;;) {
        lx.skip_ws();
        if (lx.eof()) break;
        char c = lx.peek();
        if (c == '/' || c == '(' || c == '<' || c == '[' || std::isdigit(static_cast<unsigned char>(c)) ||
            c == '-' || c == '+' || c == '.') {
            operands.push_back(parse_value(lx));
            continue;
        }
        std::string op = lex_token(lx);
        if (op.empty()) {
            ++lx.pos;
            continue;
        }
        if (op == "BT") {
            in_text = true;
            st.tm = Matrix{};
            st.tlm = Matrix{};
        } else if (op == "ET") {
            in_text = false;
            flush_block();
        } else if (op == "Tf" && operands.size() >= 2) {
            st.font_size = operands.back().num();
        } else if (op == "Td" && operands.size() >= 2) {
            st.tlm = Matrix::translate(num(operands.size() - 2), num(operands.size() - 1))
                         .mul(st.tlm);
            st.tm = st.tlm;
        } else if (op == "TD" && operands.size() >= 2) {
            st.leading = -num(operands.size() - 1);
            st.tlm = Matrix::translate(num(operands.size() - 2), num(operands.size() - 1))
                         .mul(st.tlm);
            st.tm = st.tlm;
        } else if (op == "TL" && !operands.empty()) {
            st.leading = operands.back().num();
        } else if (op == "Tm" && operands.size() >= 6) {
            std::size_t i = operands.size() - 6;
            st.tm = Matrix{num(i), num(i + 1), num(i + 2), num(i + 3), num(i + 4), num(i + 5)};
            st.tlm = st.tm;
        } else if (op == "T*") {
            st.tlm = Matrix::translate(0, -st.leading).mul(st.tlm);
            st.tm = st.tlm;
        } else if (op == "Tj" && !operands.empty() && in_text) {
            show_string(operands.back().str());
        } else if (op == "'" && !operands.empty() && in_text) {
            st.tlm = Matrix::translate(0, -st.leading).mul(st.tlm);
            st.tm = st.tlm;
            show_string(operands.back().str());
        } else if (op == "TJ" && !operands.empty() && in_text) {
            if (operands.back().is_array()) {
                for (const Value& v : operands.back().array()) {
                    if (v.is_string()) show_string(v.str());
                }
            }
        } else if (op == "q") {
            st.stack.push_back(st.ctm);
        } else if (op == "Q") {
            if (!st.stack.empty()) {
                st.ctm = st.stack.back();
                st.stack.pop_back();
            }
        } else if (op == "cm" && operands.size() >= 6) {
            std::size_t i = operands.size() - 6;
            Matrix m{num(i), num(i + 1), num(i + 2), num(i + 3), num(i + 4), num(i + 5)};
            st.ctm = m.mul(st.ctm);
        } else if (op == "Do" && !operands.empty() && xobjects) {
            const std::string& name = operands.back().str();
            auto it = xobjects->find(name);
            if (it != xobjects->end()) {
                Value xo = file.resolve(it->second);
                if (xo.is_dict()) {
                    auto sub = file.dict_get(xo.dict(), "Subtype");
                    if (sub && sub->is_string() && sub->str() == "Image") {
                        // Unit square through the CTM.
                        auto [x0, y0] = st.ctm.apply(0, 0);
                        auto [x1, y1] = st.ctm.apply(1, 1);
                        PageItem item;
                        item.kind = ItemKind::Image;
                        item.x = std::min(x0, x1);
                        item.w = std::max(1.0, std::abs(x1 - x0));
                        item.h = std::max(1.0, std::abs(y1 - y0));
                        item.y = page.height - std::max(y0, y1);
                        page.items.push_back(std::move(item));
                    }
                }
            }
        } else if (op == "re" && operands.size() >= 4) {
            std::size_t i = operands.size() - 4;
            pending_rects.push_back({num(i), num(i + 1), num(i + 2), num(i + 3)});
        } else if (op == "f" || op == "F" || op == "f*" || op == "S" || op == "s" || op == "B" ||
                   op == "B*" || op == "b" || op == "b*") {
            for (const auto& r : pending_rects) {
                auto [x0, y0] = st.ctm.apply(r[0], r[1]);
                auto [x1, y1] = st.ctm.apply(r[0] + r[2], r[1] + r[3]);
                PageItem item;
                item.kind = ItemKind::Shape;
                item.x = std::min(x0, x1);
                item.w = std::max(std::abs(x1 - x0), 0.1);
                item.h = std::max(std::abs(y1 - y0), 0.1);
                item.y = page.height - std::max(y0, y1);
                page.items.push_back(std::move(item));
            }
            pending_rects.clear();
        } else if (op == "n") {
            pending_rects.clear();
        }
        operands.clear();
    }
    if (in_text) flush_block();
}

inline void collect_pages(const File& file, const Value& node_val, const Value& inherited_box,
                          std::vector<Page>& out) {
    Value node = file.resolve(node_val);
    if (!node.is_dict()) throw ParseError("page tree node is not a dictionary");
    const Dict& d = node.dict();
    auto type = file.dict_get(d, "Type");
    Value media = inherited_box;
    if (auto mb = file.dict_get(d, "MediaBox")) media = *mb;

    bool is_leaf = type && type->is_string() && type->str() == "Page";
    if (!is_leaf) {
        auto kids = file.dict_get(d, "Kids");
        if (!kids || !kids->is_array()) throw ParseError("Pages node without Kids");
        for (const Value& kid : kids->array()) collect_pages(file, kid, media, out);
        return;
    }

    Page page;
    if (media.is_array() && media.array().size() == 4) {
        const Array& mb = media.array();
        page.width = file.resolve(mb[2]).num() - file.resolve(mb[0]).num();
        page.height = file.resolve(mb[3]).num() - file.resolve(mb[1]).num();
    }
    if (page.width <= 0 || page.height <= 0) throw ParseError("bad MediaBox");

    // Resources/XObject for image lookups.
    const Dict* xobjects = nullptr;
    Dict xobj_storage;
    if (auto res = file.dict_get(d, "Resources"); res && res->is_dict()) {
        if (auto xo = file.dict_get(res->dict(), "XObject"); xo && xo->is_dict()) {
            xobj_storage = xo->dict();
            xobjects = &xobj_storage;
        }
    }

    std::string content;
    if (auto cv = file.dict_get(d, "Contents")) {
        auto append_stream = [&](const Value& ref) {
            if (!ref.is_ref()) return;
            const Object* obj = file.object(std::get<Ref>(ref.v).id);
            if (obj && obj->has_stream) {
                content += file.decoded_stream(*obj);
                content += '\n';
            }
        };
        auto raw = d.find("Contents");
        if (raw != d.end()) {
            if (raw->second.is_ref()) {
                append_stream(raw->second);
            } else if (cv->is_array()) {
                for (const Value& v : cv->array()) append_stream(v);
            }
        }
    }
    interpret_content(content, file, xobjects, page);
    out.push_back(std::move(page));
}

}  // namespace detail

inline Document extract(const std::string& pdf_bytes) {
    detail::File file(pdf_bytes);
    int root = file.root_id();
    const detail::Object* cat = file.object(root);
    if (!cat || !cat->value.is_dict()) throw ParseError("bad catalog");
    auto pages_ref = file.dict_get(cat->value.dict(), "Pages");
    if (!pages_ref) throw ParseError("catalog without Pages");

    Document doc;
    detail::collect_pages(file, cat->value.dict().at("Pages"), detail::Value{}, doc.pages);
    if (doc.pages.empty()) throw ParseError("document has no pages");

    bool any_text = false, any_image = false;
    for (const Page& p : doc.pages) {
        for (const PageItem& it : p.items) {
            any_text |= it.kind == ItemKind::Text;
            any_image |= it.kind == ItemKind::Image;
        }
    }
    if (!any_text && any_image) throw NoTextLayer();
    return doc;
}

}  // namespace pdfmvqa::pdf
