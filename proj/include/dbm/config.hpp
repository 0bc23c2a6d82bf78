#pragma once

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace dbm {

// Flat TOML-subset configuration: [section] headers, key = value lines with
// booleans, numbers, quoted strings and arrays of numbers, # comments.
// Values are addressed as "section.key".
class Config {
  public:
    using Value = std::variant<bool, double, std::string, std::vector<double>>;

    static Config parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("config: cannot open " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_string(ss.str(), path);
    }

    static Config parse_string(const std::string& text, const std::string& origin = "<string>") {
        Config cfg;
        std::string section;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string s = strip_comment(line);
            s = trim(s);
            if (s.empty()) continue;
            if (s.front() == '[') {
                if (s.back() != ']')
                    throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                             ": unterminated section header");
                section = trim(s.substr(1, s.size() - 2));
                if (section.empty())
                    throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                             ": empty section name");
                continue;
            }
            const std::size_t eq = s.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                         ": expected key = value");
            std::string key = trim(s.substr(0, eq));
            std::string val = trim(s.substr(eq + 1));
            if (key.empty())
                throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": empty key");
            const std::string full = section.empty() ? key : section + "." + key;
            cfg.values_[full] = parse_value(val, origin, lineno);
        }
        return cfg;
    }

    // "key=value" command-line override; numbers and booleans are detected.
    void set_override(const std::string& assignment) {
        const std::size_t eq = assignment.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("--set expects key=value, got: " + assignment);
        const std::string key = trim(assignment.substr(0, eq));
        const std::string val = trim(assignment.substr(eq + 1));
        if (key.empty() || val.empty())
            throw std::runtime_error("--set expects key=value, got: " + assignment);
        values_[key] = parse_value(val.front() == '"' || val.front() == '[' ? val : quote_if_string(val),
                                   "<override>", 0);
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    double number(const std::string& key) const {
        const Value& v = require(key);
        if (const double* d = std::get_if<double>(&v)) return *d;
        throw std::runtime_error("config: key " + key + " is not a number");
    }
    double number_or(const std::string& key, double fallback) const {
        return has(key) ? number(key) : fallback;
    }
    long integer(const std::string& key) const {
        const double d = number(key);
        const long l = static_cast<long>(d);
        if (static_cast<double>(l) != d)
            throw std::runtime_error("config: key " + key + " is not an integer");
        return l;
    }
    long integer_or(const std::string& key, long fallback) const {
        return has(key) ? integer(key) : fallback;
    }
    bool boolean_or(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const Value& v = require(key);
        if (const bool* b = std::get_if<bool>(&v)) return *b;
        throw std::runtime_error("config: key " + key + " is not a boolean");
    }
    std::string str(const std::string& key) const {
        const Value& v = require(key);
        if (const std::string* s = std::get_if<std::string>(&v)) return *s;
        throw std::runtime_error("config: key " + key + " is not a string");
    }
    std::string str_or(const std::string& key, const std::string& fallback) const {
        return has(key) ? str(key) : fallback;
    }
    std::vector<double> numbers_or(const std::string& key, std::vector<double> fallback) const {
        if (!has(key)) return fallback;
        const Value& v = require(key);
        if (const auto* a = std::get_if<std::vector<double>>(&v)) return *a;
        if (const double* d = std::get_if<double>(&v)) return {*d};
        throw std::runtime_error("config: key " + key + " is not a number array");
    }

  private:
    const Value& require(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end())
            throw std::runtime_error("config: missing required key " + key);
        return it->second;
    }

    static std::string trim(const std::string& s) {
        std::size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }

    static std::string strip_comment(const std::string& s) {
        bool in_str = false;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '"') in_str = !in_str;
            if (s[i] == '#' && !in_str) return s.substr(0, i);
        }
        return s;
    }

    static std::string quote_if_string(const std::string& v) {
        if (v == "true" || v == "false") return v;
        char* end = nullptr;
        std::strtod(v.c_str(), &end);
        if (end != v.c_str() && *end == '\0') return v;  // numeric
        return "\"" + v + "\"";
    }

    static Value parse_value(const std::string& raw, const std::string& origin, int lineno) {
        const auto fail = [&](const std::string& msg) -> Value {
            throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": " + msg);
        };
        if (raw.empty()) return fail("empty value");
        if (raw == "true") return true;
        if (raw == "false") return false;
        if (raw.front() == '"') {
            if (raw.size() < 2 || raw.back() != '"') return fail("unterminated string");
            return raw.substr(1, raw.size() - 2);
        }
        if (raw.front() == '[') {
            if (raw.back() != ']') return fail("unterminated array");
            std::vector<double> arr;
            std::string body = raw.substr(1, raw.size() - 2);
            std::istringstream in(body);
            std::string item;
            while (std::getline(in, item, ',')) {
                const std::string t = trim(item);
                if (t.empty()) continue;
                char* end = nullptr;
                const double d = std::strtod(t.c_str(), &end);
                if (end == t.c_str() || *end != '\0') return fail("bad array element: " + t);
                arr.push_back(d);
            }
            return arr;
        }
        char* end = nullptr;
        const double d = std::strtod(raw.c_str(), &end);
        if (end != raw.c_str() && *end == '\0') return d;
        return fail("unrecognized value: " + raw);
    }

    std::map<std::string, Value> values_;
};

}  // namespace dbm
