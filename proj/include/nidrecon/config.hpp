#ifndef NIDRECON_CONFIG_HPP
#define NIDRECON_CONFIG_HPP

// Key-value configuration read from a TOML subset: [table] / [a.b] headers,
// bare or dotted keys, strings, integers, floats (inf / nan included),
// booleans, arrays (nested, multi-line) and # comments.  Inline tables and
// dates are not supported.

#include "error.hpp"
#include "number_format.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace nidrecon {

struct ConfigValue;
using ConfigArray = std::vector<ConfigValue>;

struct ConfigValue {
    std::variant<bool, std::int64_t, double, std::string, ConfigArray> v;

    bool is_bool() const { return std::holds_alternative<bool>(v); }
    bool is_int() const { return std::holds_alternative<std::int64_t>(v); }
    bool is_number() const { return is_int() || std::holds_alternative<double>(v); }
    bool is_string() const { return std::holds_alternative<std::string>(v); }
    bool is_array() const { return std::holds_alternative<ConfigArray>(v); }

    friend bool operator==(const ConfigValue&, const ConfigValue&) = default;
};

namespace detail {

class TomlReader {
public:
    TomlReader(std::string_view text, std::string origin) : s_(text), origin_(std::move(origin)) {}

    std::map<std::string, ConfigValue> parse()
    {
        std::map<std::string, ConfigValue> out;
        std::string table;
        while (true) {
            skip_ws_comments_newlines();
            if (eof()) break;
            if (peek() == '[') {
                ++pos_;
                skip_inline_ws();
                if (peek() == '[') fail("arrays of tables are not supported");
                table = parse_key();
                skip_inline_ws();
                expect(']');
                end_of_line();
                continue;
            }
            std::string key = parse_key();
            skip_inline_ws();
            expect('=');
            skip_inline_ws();
            ConfigValue val = parse_value();
            end_of_line();
            const std::string full = table.empty() ? key : table + "." + key;
            if (out.count(full)) fail("duplicate key '" + full + "'");
            out.emplace(full, std::move(val));
        }
        return out;
    }

    /// a single value, the whole input must be consumed
    ConfigValue parse_single()
    {
        skip_inline_ws();
        ConfigValue v = parse_value();
        skip_inline_ws();
        if (!eof()) fail("trailing characters after value");
        return v;
    }

private:
    bool eof() const { return pos_ >= s_.size(); }
    char peek() const { return eof() ? '\0' : s_[pos_]; }

    [[noreturn]] void fail(const std::string& msg) const
    {
        int line = 1;
        for (std::size_t k = 0; k < pos_ && k < s_.size(); ++k)
            if (s_[k] == '\n') ++line;
        throw ConfigError(origin_ + ":" + std::to_string(line) + ": " + msg);
    }

    void expect(char c)
    {
        if (peek() != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    void skip_inline_ws()
    {
        while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
    }

    void skip_comment()
    {
        if (peek() == '#')
            while (!eof() && peek() != '\n') ++pos_;
    }

    void skip_ws_comments_newlines()
    {
        while (!eof()) {
            const char c = peek();
            if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos_;
            } else if (c == '#') {
                skip_comment();
            } else {
                break;
            }
        }
    }

    void end_of_line()
    {
        skip_inline_ws();
        skip_comment();
        if (peek() == '\r') ++pos_;
        if (!eof() && peek() != '\n') fail("expected end of line");
    }

    static bool bare_char(char c)
    {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
    }

    std::string parse_key()
    {
        std::string key;
        while (true) {
            skip_inline_ws();
            std::string part;
            if (peek() == '"') {
                part = parse_basic_string();
            } else {
                while (!eof() && bare_char(peek())) part += s_[pos_++];
            }
            if (part.empty()) fail("empty key");
            key += part;
            skip_inline_ws();
            if (peek() != '.') break;
            ++pos_;
            key += '.';
        }
        return key;
    }

    std::string parse_basic_string()
    {
        expect('"');
        std::string out;
        while (true) {
            if (eof() || peek() == '\n') fail("unterminated string");
            char c = s_[pos_++];
            if (c == '"') break;
            if (c == '\\') {
                if (eof()) fail("unterminated escape");
                const char e = s_[pos_++];
                switch (e) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case 'r': out += '\r'; break;
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                default: fail(std::string("unsupported escape \\") + e);
                }
            } else {
                out += c;
            }
        }
        return out;
    }

    std::string parse_literal_string()
    {
        expect('\'');
        std::string out;
        while (true) {
            if (eof() || peek() == '\n') fail("unterminated string");
            const char c = s_[pos_++];
            if (c == '\'') break;
            out += c;
        }
        return out;
    }

    ConfigValue parse_value()
    {
        const char c = peek();
        if (c == '"') return {parse_basic_string()};
        if (c == '\'') return {parse_literal_string()};
        if (c == '[') return parse_array();
        if (c == '{') fail("inline tables are not supported");
        std::string tok;
        while (!eof()) {
            const char d = peek();
            if (d == ',' || d == ']' || d == ' ' || d == '\t' || d == '\r' || d == '\n' || d == '#') break;
            tok += d;
            ++pos_;
        }
        if (tok.empty()) fail("missing value");
        if (tok == "true") return {true};
        if (tok == "false") return {false};
        return parse_number(tok);
    }

    ConfigValue parse_number(std::string tok)
    {
        std::string clean;
        for (char ch : tok)
            if (ch != '_') clean += ch;
        const std::string_view body = (clean[0] == '+' || clean[0] == '-') ? std::string_view(clean).substr(1) : clean;
        const bool neg = clean[0] == '-';
        if (body == "inf") return {neg ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity()};
        if (body == "nan") return {std::numeric_limits<double>::quiet_NaN()};
        const bool is_float = clean.find_first_of(".eE") != std::string::npos;
        const char* first = clean.data() + (clean[0] == '+' ? 1 : 0);
        const char* last = clean.data() + clean.size();
        if (is_float) {
            double d = 0.0;
            auto [p, ec] = std::from_chars(first, last, d);
            if (ec != std::errc() || p != last) fail("invalid number '" + tok + "'");
            return {d};
        }
        std::int64_t i = 0;
        auto [p, ec] = std::from_chars(first, last, i);
        if (ec != std::errc() || p != last) fail("invalid value '" + tok + "'");
        return {i};
    }

    ConfigValue parse_array()
    {
        expect('[');
        ConfigArray arr;
        while (true) {
            skip_ws_comments_newlines();
            if (peek() == ']') {
                ++pos_;
                break;
            }
            arr.push_back(parse_value());
            skip_ws_comments_newlines();
            if (peek() == ',') {
                ++pos_;
                continue;
            }
            skip_ws_comments_newlines();
            expect(']');
            break;
        }
        return {std::move(arr)};
    }

    std::string_view s_;
    std::string origin_;
    std::size_t pos_ = 0;
};

inline std::string toml_quote(const std::string& s)
{
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        case '\r': out += "\\r"; break;
        default: out += c;
        }
    }
    return out + "\"";
}

} // namespace detail

/// Text form that parses back to an identical value.
inline std::string to_toml(const ConfigValue& v)
{
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, bool>) {
                return x ? "true" : "false";
            } else if constexpr (std::is_same_v<T, std::int64_t>) {
                return std::to_string(x);
            } else if constexpr (std::is_same_v<T, double>) {
                std::string s = format_double(x);
                if (std::isfinite(x) && s.find_first_of(".e") == std::string::npos) s += ".0";
                return s;
            } else if constexpr (std::is_same_v<T, std::string>) {
                return detail::toml_quote(x);
            } else {
                std::string s = "[";
                for (std::size_t k = 0; k < x.size(); ++k) {
                    if (k) s += ", ";
                    s += to_toml(x[k]);
                }
                return s + "]";
            }
        },
        v.v);
}

/// Flat map from dotted keys to values.
class Config {
public:
    Config() = default;

    static Config parse(std::string_view text, const std::string& origin = "<config>")
    {
        Config c;
        c.values_ = detail::TomlReader(text, origin).parse();
        return c;
    }

    static Config load(const std::string& path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open config file '" + path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path);
    }

    /// "key=value"; a value that does not parse as TOML is taken as a bare string
    void apply_override(const std::string& assignment)
    {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(assignment.substr(0, eq));
        const std::string text = trim(assignment.substr(eq + 1));
        ConfigValue v;
        try {
            v = detail::TomlReader(text, "--override " + key).parse_single();
        } catch (const ConfigError&) {
            v = ConfigValue{text};
        }
        values_[key] = std::move(v);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, ConfigValue>& values() const { return values_; }
    void set(const std::string& key, ConfigValue v) { values_[key] = std::move(v); }

    double get_double(const std::string& key, double fallback) const
    {
        const auto* v = find(key);
        if (!v) return fallback;
        return as_double(*v, key);
    }

    std::int64_t get_int(const std::string& key, std::int64_t fallback) const
    {
        const auto* v = find(key);
        if (!v) return fallback;
        if (const auto* i = std::get_if<std::int64_t>(&v->v)) return *i;
        throw ConfigError("config key '" + key + "' must be an integer");
    }

    bool get_bool(const std::string& key, bool fallback) const
    {
        const auto* v = find(key);
        if (!v) return fallback;
        if (const auto* b = std::get_if<bool>(&v->v)) return *b;
        throw ConfigError("config key '" + key + "' must be true or false");
    }

    std::string get_string(const std::string& key, const std::string& fallback) const
    {
        const auto* v = find(key);
        if (!v) return fallback;
        if (const auto* s = std::get_if<std::string>(&v->v)) return *s;
        throw ConfigError("config key '" + key + "' must be a string");
    }

    std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const
    {
        const auto* v = find(key);
        if (!v) return fallback;
        const auto* arr = std::get_if<ConfigArray>(&v->v);
        if (!arr) throw ConfigError("config key '" + key + "' must be an array of numbers");
        std::vector<double> out;
        for (const auto& x : *arr) out.push_back(as_double(x, key));
        return out;
    }

    std::vector<std::string> get_strings(const std::string& key, const std::vector<std::string>& fallback) const
    {
        const auto* v = find(key);
        if (!v) return fallback;
        const auto* arr = std::get_if<ConfigArray>(&v->v);
        if (!arr) throw ConfigError("config key '" + key + "' must be an array of strings");
        std::vector<std::string> out;
        for (const auto& x : *arr) {
            const auto* s = std::get_if<std::string>(&x.v);
            if (!s) throw ConfigError("config key '" + key + "' must be an array of strings");
            out.push_back(*s);
        }
        return out;
    }

    /// Grouped by table, keys sorted; parses back to an equal Config.
    std::string to_toml() const
    {
        std::map<std::string, std::vector<std::pair<std::string, const ConfigValue*>>> tables;
        for (const auto& [key, val] : values_) {
            const auto dot = key.rfind('.');
            const std::string table = dot == std::string::npos ? "" : key.substr(0, dot);
            const std::string leaf = dot == std::string::npos ? key : key.substr(dot + 1);
            tables[table].emplace_back(leaf, &val);
        }
        std::string out;
        for (const auto& [table, entries] : tables) {
            if (!table.empty()) out += (out.empty() ? "" : "\n") + std::string("[") + table + "]\n";
            for (const auto& [leaf, val] : entries) out += leaf + " = " + nidrecon::to_toml(*val) + "\n";
        }
        return out;
    }

private:
    const ConfigValue* find(const std::string& key) const
    {
        const auto it = values_.find(key);
        return it == values_.end() ? nullptr : &it->second;
    }

    static double as_double(const ConfigValue& v, const std::string& key)
    {
        if (const auto* d = std::get_if<double>(&v.v)) return *d;
        if (const auto* i = std::get_if<std::int64_t>(&v.v)) return static_cast<double>(*i);
        throw ConfigError("config key '" + key + "' must be a number");
    }

    std::map<std::string, ConfigValue> values_;
};

} // namespace nidrecon

#endif
