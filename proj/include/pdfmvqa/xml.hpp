// Small well-formed-XML subset parser: elements, attributes, character data,
// comments, CDATA and the five predefined entities plus numeric references.
// Enough for structured full-text article files; not a validating parser.
#pragma once

#include <cctype>
#include <cstring>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace pdfmvqa::xml {

class XmlError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct Element {
    std::string name;
    std::map<std::string, std::string> attrs;
    std::vector<Element> children;
    std::string text;  // direct character data, children excluded

    const Element* find(const std::string& child_name) const {
        for (const Element& c : children) {
            if (c.name == child_name) return &c;
        }
        return nullptr;
    }
};

namespace detail {

struct Cursor {
    const std::string& src;
    std::size_t pos = 0;

    bool eof() const { return pos >= src.size(); }
    char peek(std::size_t ahead = 0) const {
        return pos + ahead < src.size() ? src[pos + ahead] : '\0';
    }
    bool starts_with(const char* s) const { return src.compare(pos, std::strlen(s), s) == 0; }
    void expect(char c) {
        if (eof() || src[pos] != c) {
            throw XmlError("expected '" + std::string(1, c) + "' at offset " +
                           std::to_string(pos));
        }
        ++pos;
    }
    void skip_ws() {
        while (!eof() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos;
    }
};

inline std::string decode_entities(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size();) {
        if (s[i] != '&') {
            out += s[i++];
            continue;
        }
        auto semi = s.find(';', i);
        if (semi == std::string::npos) {
            out += s[i++];
            continue;
        }
        std::string ent = s.substr(i + 1, semi - i - 1);
        if (ent == "amp") out += '&';
        else if (ent == "lt") out += '<';
        else if (ent == "gt") out += '>';
        else if (ent == "quot") out += '"';
        else if (ent == "apos") out += '\'';
        else if (!ent.empty() && ent[0] == '#') {
            long code = 0;
            try {
                code = (ent.size() > 1 && (ent[1] == 'x' || ent[1] == 'X'))
                           ? std::stol(ent.substr(2), nullptr, 16)
                           : std::stol(ent.substr(1));
            } catch (const std::exception&) {
                throw XmlError("bad character reference &" + ent + ";");
            }
            // UTF-8 encode.
            auto c = static_cast<unsigned long>(code);
            if (c < 0x80) {
                out += static_cast<char>(c);
            } else if (c < 0x800) {
                out += static_cast<char>(0xC0 | (c >> 6));
                out += static_cast<char>(0x80 | (c & 0x3F));
            } else if (c < 0x10000) {
                out += static_cast<char>(0xE0 | (c >> 12));
                out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
                out += static_cast<char>(0x80 | (c & 0x3F));
            } else {
                out += static_cast<char>(0xF0 | (c >> 18));
                out += static_cast<char>(0x80 | ((c >> 12) & 0x3F));
                out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
                out += static_cast<char>(0x80 | (c & 0x3F));
            }
        } else {
            throw XmlError("unknown entity &" + ent + ";");
        }
        i = semi + 1;
    }
    return out;
}

inline std::string parse_name(Cursor& c) {
    std::size_t start = c.pos;
    while (!c.eof()) {
        char ch = c.src[c.pos];
        if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == ':' ||
            ch == '.') {
            ++c.pos;
        } else {
            break;
        }
    }
    if (c.pos == start) throw XmlError("expected name at offset " + std::to_string(start));
    return c.src.substr(start, c.pos - start);
}

inline void skip_misc(Cursor& c) {
    for (;;) {
        c.skip_ws();
        if (c.starts_with("<?")) {
            auto end = c.src.find("?>", c.pos);
            if (end == std::string::npos) throw XmlError("unterminated processing instruction");
            c.pos = end + 2;
        } else if (c.starts_with("<!--")) {
            auto end = c.src.find("-->", c.pos);
            if (end == std::string::npos) throw XmlError("unterminated comment");
            c.pos = end + 3;
        } else if (c.starts_with("<!")) {  // DOCTYPE and friends
            auto end = c.src.find('>', c.pos);
            if (end == std::string::npos) throw XmlError("unterminated declaration");
            c.pos = end + 1;
        } else {
            return;
        }
    }
}

inline Element parse_element(Cursor& c);

inline void parse_content(Cursor& c, Element& elem) {
    for (;;) {
        if (c.eof()) throw XmlError("unexpected end inside <" + elem.name + ">");
        if (c.peek() == '<') {
            if (c.starts_with("</")) return;
            if (c.starts_with("<!--")) {
                auto end = c.src.find("-->", c.pos);
                if (end == std::string::npos) throw XmlError("unterminated comment");
                c.pos = end + 3;
                continue;
            }
            if (c.starts_with("<![CDATA[")) {
                auto end = c.src.find("]]>", c.pos);
                if (end == std::string::npos) throw XmlError("unterminated CDATA");
                elem.text += c.src.substr(c.pos + 9, end - c.pos - 9);
                c.pos = end + 3;
                continue;
            }
            if (c.starts_with("<?")) {
                auto end = c.src.find("?>", c.pos);
                if (end == std::string::npos) throw XmlError("unterminated processing instruction");
                c.pos = end + 2;
                continue;
            }
            elem.children.push_back(parse_element(c));
        } else {
            std::size_t start = c.pos;
            while (!c.eof() && c.peek() != '<') ++c.pos;
            elem.text += decode_entities(c.src.substr(start, c.pos - start));
        }
    }
}

inline Element parse_element(Cursor& c) {
    c.expect('<');
    Element elem;
    elem.name = parse_name(c);
    for (;;) {
        c.skip_ws();
        if (c.starts_with("/>")) {
            c.pos += 2;
            return elem;
        }
        if (c.peek() == '>') {
            ++c.pos;
            break;
        }
        std::string attr = parse_name(c);
        c.skip_ws();
        c.expect('=');
        c.skip_ws();
        char quote = c.peek();
        if (quote != '"' && quote != '\'') throw XmlError("expected quoted attribute value");
        ++c.pos;
        std::size_t start = c.pos;
        while (!c.eof() && c.peek() != quote) ++c.pos;
        if (c.eof()) throw XmlError("unterminated attribute value");
        elem.attrs[attr] = decode_entities(c.src.substr(start, c.pos - start));
        ++c.pos;
    }
    parse_content(c, elem);
    // closing tag
    c.pos += 2;  // "</"
    std::string closing = parse_name(c);
    if (closing != elem.name) {
        throw XmlError("mismatched closing tag </" + closing + "> for <" + elem.name + ">");
    }
    c.skip_ws();
    c.expect('>');
    return elem;
}

}  // namespace detail

inline Element parse(const std::string& src) {
    detail::Cursor c{src};
    detail::skip_misc(c);
    if (c.eof() || c.peek() != '<') throw XmlError("no root element");
    Element root = detail::parse_element(c);
    detail::skip_misc(c);
    return root;
}

// Concatenated character data of an element and its descendants, in document
// order, with whitespace runs collapsed.
inline std::string collect_text(const Element& elem) {
    std::string raw;
    // Direct text first, then children: article markup interleaves text and
    // inline elements, which the Element model flattens; good enough for the
    // node granularity used here.
    std::function<void(const Element&)> walk = [&](const Element& e) {
        raw += e.text;
        for (const Element& ch : e.children) {
            raw += ' ';
            walk(ch);
        }
    };
    walk(elem);
    std::string out;
    bool in_ws = true;
    for (char ch : raw) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!in_ws) out += ' ';
            in_ws = true;
        } else {
            out += ch;
            in_ws = false;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

}  // namespace pdfmvqa::xml
