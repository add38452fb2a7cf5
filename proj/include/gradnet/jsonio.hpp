#pragma once

// Minimal JSON reader/writer for the netlist dialect and the other JSON
// surfaces (tables, sizing specs, result files). Differences from stock JSON:
//   - `#` starts a line comment outside string literals
//   - object member order is preserved
//   - numeric overflow reads as +/-infinity, and infinities print as
//     `1e1000` / `-1e1000` so documents round-trip
//   - duplicate object keys are rejected

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "gradnet/errors.hpp"

namespace gradnet::jsonio {

class Value;

struct Member {
    std::string key;
    // Defined out-of-line via Value; vector<Member> keeps document order.
    std::vector<Value> val;  // always size 1; indirection keeps Member complete
    Value& value() { return val.front(); }
    const Value& value() const { return val.front(); }
};

using Array = std::vector<Value>;
using Object = std::vector<Member>;

class Value {
  public:
    Value() : data_(nullptr) {}
    Value(std::nullptr_t) : data_(nullptr) {}
    Value(bool b) : data_(b) {}
    Value(double d) : data_(d) {}
    Value(int i) : data_(static_cast<double>(i)) {}
    Value(const char* s) : data_(std::string(s)) {}
    Value(std::string s) : data_(std::move(s)) {}
    Value(Array a) : data_(std::move(a)) {}
    Value(Object o) : data_(std::move(o)) {}

    bool is_null() const { return std::holds_alternative<std::nullptr_t>(data_); }
    bool is_bool() const { return std::holds_alternative<bool>(data_); }
    bool is_number() const { return std::holds_alternative<double>(data_); }
    bool is_string() const { return std::holds_alternative<std::string>(data_); }
    bool is_array() const { return std::holds_alternative<Array>(data_); }
    bool is_object() const { return std::holds_alternative<Object>(data_); }

    bool as_bool() const { return std::get<bool>(data_); }
    double as_number() const { return std::get<double>(data_); }
    const std::string& as_string() const { return std::get<std::string>(data_); }
    const Array& as_array() const { return std::get<Array>(data_); }
    Array& as_array() { return std::get<Array>(data_); }
    const Object& as_object() const { return std::get<Object>(data_); }
    Object& as_object() { return std::get<Object>(data_); }

    const Value* find(const std::string& key) const {
        if (!is_object()) return nullptr;
        for (const Member& m : as_object()) {
            if (m.key == key) return &m.value();
        }
        return nullptr;
    }

    void set(const std::string& key, Value v) {
        Object& o = std::get<Object>(data_);
        o.push_back(Member{key, {std::move(v)}});
    }

    const char* type_name() const {
        switch (data_.index()) {
            case 0: return "null";
            case 1: return "bool";
            case 2: return "number";
            case 3: return "string";
            case 4: return "array";
            default: return "object";
        }
    }

    int line = 0;
    int column = 0;

  private:
    std::variant<std::nullptr_t, bool, double, std::string, Array, Object> data_;
};

inline Value object() { return Value(Object{}); }
inline Value array() { return Value(Array{}); }

/// Number in JSON number or string form; nullopt otherwise.
inline std::optional<double> coerce_number(const Value& v) {
    if (v.is_number()) return v.as_number();
    if (v.is_string()) {
        const std::string& s = v.as_string();
        if (s.empty()) return std::nullopt;
        const char* begin = s.c_str();
        char* end = nullptr;
        double d = std::strtod(begin, &end);
        if (end != begin + s.size()) return std::nullopt;
        return d;
    }
    return std::nullopt;
}

namespace detail {

class Parser {
  public:
    Parser(const std::string& text) : text_(text) {}

    Value parse_document() {
        Value v = parse_value();
        skip_trivia();
        if (pos_ < text_.size()) fail("trailing content after document");
        return v;
    }

  private:
    const std::string& text_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;

    [[noreturn]] void fail(const std::string& msg) { throw SyntaxError(msg, line_, col_); }

    char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

    char advance() {
        char c = text_[pos_++];
        if (c == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        return c;
    }

    void skip_trivia() {
        while (pos_ < text_.size()) {
            char c = peek();
            if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                advance();
            } else if (c == '#') {
                while (pos_ < text_.size() && peek() != '\n') advance();
            } else {
                break;
            }
        }
    }

    void expect(char c) {
        if (pos_ >= text_.size() || peek() != c) {
            fail(std::string("expected '") + c + "'");
        }
        advance();
    }

    Value parse_value() {
        skip_trivia();
        if (pos_ >= text_.size()) fail("unexpected end of input");
        int vline = line_, vcol = col_;
        char c = peek();
        Value v;
        if (c == '{') {
            v = parse_object();
        } else if (c == '[') {
            v = parse_array();
        } else if (c == '"') {
            v = Value(parse_string());
        } else if (c == '-' || (c >= '0' && c <= '9')) {
            v = Value(parse_number());
        } else if (text_.compare(pos_, 4, "true") == 0) {
            pos_ += 4;
            col_ += 4;
            v = Value(true);
        } else if (text_.compare(pos_, 5, "false") == 0) {
            pos_ += 5;
            col_ += 5;
            v = Value(false);
        } else if (text_.compare(pos_, 4, "null") == 0) {
            pos_ += 4;
            col_ += 4;
            v = Value(nullptr);
        } else {
            fail("unexpected character");
        }
        v.line = vline;
        v.column = vcol;
        return v;
    }

    Value parse_object() {
        expect('{');
        Object members;
        skip_trivia();
        if (peek() == '}') {
            advance();
            return Value(std::move(members));
        }
        while (true) {
            skip_trivia();
            if (peek() != '"') fail("expected object key");
            int kline = line_, kcol = col_;
            std::string key = parse_string();
            for (const Member& m : members) {
                if (m.key == key) {
                    throw SyntaxError("duplicate object key \"" + key + "\"", kline, kcol);
                }
            }
            skip_trivia();
            expect(':');
            Value val = parse_value();
            members.push_back(Member{std::move(key), {std::move(val)}});
            skip_trivia();
            char c = peek();
            if (c == ',') {
                advance();
            } else if (c == '}') {
                advance();
                break;
            } else {
                fail("expected ',' or '}' in object");
            }
        }
        return Value(std::move(members));
    }

    Value parse_array() {
        expect('[');
        Array items;
        skip_trivia();
        if (peek() == ']') {
            advance();
            return Value(std::move(items));
        }
        while (true) {
            items.push_back(parse_value());
            skip_trivia();
            char c = peek();
            if (c == ',') {
                advance();
            } else if (c == ']') {
                advance();
                break;
            } else {
                fail("expected ',' or ']' in array");
            }
        }
        return Value(std::move(items));
    }

    std::string parse_string() {
        expect('"');
        std::string out;
        while (true) {
            if (pos_ >= text_.size()) fail("unterminated string");
            char c = advance();
            if (c == '"') break;
            if (c == '\\') {
                if (pos_ >= text_.size()) fail("unterminated escape");
                char e = advance();
                switch (e) {
                    case '"': out += '"'; break;
                    case '\\': out += '\\'; break;
                    case '/': out += '/'; break;
                    case 'b': out += '\b'; break;
                    case 'f': out += '\f'; break;
                    case 'n': out += '\n'; break;
                    case 'r': out += '\r'; break;
                    case 't': out += '\t'; break;
                    case 'u': out += parse_unicode_escape(); break;
                    default: fail("invalid escape");
                }
            } else {
                out += c;
            }
        }
        return out;
    }

    std::string parse_unicode_escape() {
        unsigned code = parse_hex4();
        if (code >= 0xD800 && code <= 0xDBFF) {
            if (pos_ + 1 < text_.size() && text_[pos_] == '\\' && text_[pos_ + 1] == 'u') {
                advance();
                advance();
                unsigned low = parse_hex4();
                if (low >= 0xDC00 && low <= 0xDFFF) {
                    code = 0x10000 + ((code - 0xD800) << 10) + (low - 0xDC00);
                } else {
                    fail("invalid surrogate pair");
                }
            } else {
                fail("unpaired surrogate");
            }
        }
        std::string out;
        if (code < 0x80) {
            out += static_cast<char>(code);
        } else if (code < 0x800) {
            out += static_cast<char>(0xC0 | (code >> 6));
            out += static_cast<char>(0x80 | (code & 0x3F));
        } else if (code < 0x10000) {
            out += static_cast<char>(0xE0 | (code >> 12));
            out += static_cast<char>(0x80 | ((code >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (code & 0x3F));
        } else {
            out += static_cast<char>(0xF0 | (code >> 18));
            out += static_cast<char>(0x80 | ((code >> 12) & 0x3F));
            out += static_cast<char>(0x80 | ((code >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (code & 0x3F));
        }
        return out;
    }

    unsigned parse_hex4() {
        unsigned v = 0;
        for (int i = 0; i < 4; ++i) {
            if (pos_ >= text_.size()) fail("truncated \\u escape");
            char c = advance();
            v <<= 4;
            if (c >= '0' && c <= '9') v |= static_cast<unsigned>(c - '0');
            else if (c >= 'a' && c <= 'f') v |= static_cast<unsigned>(c - 'a' + 10);
            else if (c >= 'A' && c <= 'F') v |= static_cast<unsigned>(c - 'A' + 10);
            else fail("invalid hex digit in \\u escape");
        }
        return v;
    }

    double parse_number() {
        std::size_t start = pos_;
        if (peek() == '-') advance();
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(peek()))) advance();
        if (peek() == '.') {
            advance();
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(peek()))) advance();
        }
        if (peek() == 'e' || peek() == 'E') {
            advance();
            if (peek() == '+' || peek() == '-') advance();
            if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("malformed exponent");
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(peek()))) advance();
        }
        std::string slice = text_.substr(start, pos_ - start);
        char* end = nullptr;
        // strtod overflows to +-HUGE_VAL, which is the wanted reading.
        double d = std::strtod(slice.c_str(), &end);
        if (end != slice.c_str() + slice.size()) fail("malformed number");
        return d;
    }
};

inline void write_number(std::string& out, double d) {
    if (std::isinf(d)) {
        out += d > 0 ? "1e1000" : "-1e1000";
        return;
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", d);
    out += buf;
}

inline void write_string(std::string& out, const std::string& s) {
    out += '"';
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\b': out += "\\b"; break;
            case '\f': out += "\\f"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    out += '"';
}

inline void write_value(std::string& out, const Value& v, int indent, int depth) {
    auto pad = [&](int d) {
        if (indent > 0) {
            out += '\n';
            out.append(static_cast<std::size_t>(indent * d), ' ');
        }
    };
    if (v.is_null()) {
        out += "null";
    } else if (v.is_bool()) {
        out += v.as_bool() ? "true" : "false";
    } else if (v.is_number()) {
        write_number(out, v.as_number());
    } else if (v.is_string()) {
        write_string(out, v.as_string());
    } else if (v.is_array()) {
        const Array& a = v.as_array();
        if (a.empty()) {
            out += "[]";
            return;
        }
        out += '[';
        for (std::size_t i = 0; i < a.size(); ++i) {
            pad(depth + 1);
            write_value(out, a[i], indent, depth + 1);
            if (i + 1 < a.size()) out += ',';
        }
        pad(depth);
        out += ']';
    } else {
        const Object& o = v.as_object();
        if (o.empty()) {
            out += "{}";
            return;
        }
        out += '{';
        for (std::size_t i = 0; i < o.size(); ++i) {
            pad(depth + 1);
            write_string(out, o[i].key);
            out += indent > 0 ? ": " : ":";
            write_value(out, o[i].value(), indent, depth + 1);
            if (i + 1 < o.size()) out += ',';
        }
        pad(depth);
        out += '}';
    }
}

}  // namespace detail

inline Value parse(const std::string& text) { return detail::Parser(text).parse_document(); }

inline std::string to_text(const Value& v, int indent = 2) {
    std::string out;
    detail::write_value(out, v, indent, 0);
    if (indent > 0) out += '\n';
    return out;
}

}  // namespace gradnet::jsonio
