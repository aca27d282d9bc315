#include "nlspde/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "nlspde/error.hpp"

namespace nlspde {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::Config, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

[[noreturn]] void toml_error(int line, const std::string& what) {
    throw Error(ErrorCode::Config, "toml line " + std::to_string(line) + ": " + what);
}

// Drops a trailing comment outside of string literals.
std::string_view strip_comment(std::string_view s) {
    bool in_string = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_string = !in_string;
        if (s[i] == '#' && !in_string) return s.substr(0, i);
    }
    return s;
}

nlohmann::json toml_scalar(std::string_view v, int line) {
    v = trim(v);
    if (v.empty()) toml_error(line, "missing value");
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"') toml_error(line, "unterminated string");
        std::string out;
        for (std::size_t i = 1; i + 1 < v.size(); ++i) {
            if (v[i] == '\\' && i + 2 < v.size()) {
                const char e = v[++i];
                out += e == 'n' ? '\n' : e == 't' ? '\t' : e;
            } else {
                out += v[i];
            }
        }
        return out;
    }
    if (v == "true") return true;
    if (v == "false") return false;
    std::string digits;
    for (char c : v) {
        if (c != '_') digits += c;
    }
    const bool integral = digits.find_first_of(".eE") == std::string::npos &&
                          digits != "inf" && digits != "nan";
    if (integral) {
        long long x = 0;
        auto [p, ec] = std::from_chars(digits.data() + (digits[0] == '+'), digits.data() + digits.size(), x);
        if (ec == std::errc() && p == digits.data() + digits.size()) return x;
    }
    try {
        return parse_decimal(digits, "value");
    } catch (const Error&) {
        toml_error(line, "cannot parse value '" + std::string(v) + "'");
    }
}

// Splits on commas outside strings, arrays and inline tables.
std::vector<std::string_view> split_items(std::string_view body, int line) {
    std::vector<std::string_view> items;
    std::size_t start = 0;
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = 0; i <= body.size(); ++i) {
        const char c = i < body.size() ? body[i] : ',';
        if (c == '"' && (i == 0 || body[i - 1] != '\\')) in_string = !in_string;
        if (in_string) continue;
        if (c == '[' || c == '{') ++depth;
        if (c == ']' || c == '}') --depth;
        if (depth < 0) toml_error(line, "unbalanced brackets");
        if (c == ',' && depth == 0) {
            auto item = trim(body.substr(start, i - start));
            if (!item.empty()) items.push_back(item);
            start = i + 1;
        }
    }
    if (depth != 0 || in_string) toml_error(line, "unbalanced brackets");
    return items;
}

std::vector<std::string> split_key(std::string_view key, int line);

nlohmann::json toml_value(std::string_view v, int line) {
    v = trim(v);
    if (!v.empty() && v.front() == '[') {
        if (v.back() != ']') toml_error(line, "arrays must close on the same line");
        nlohmann::json arr = nlohmann::json::array();
        for (auto item : split_items(trim(v.substr(1, v.size() - 2)), line)) arr.push_back(toml_value(item, line));
        return arr;
    }
    if (!v.empty() && v.front() == '{') {
        if (v.back() != '}') toml_error(line, "inline tables must close on the same line");
        nlohmann::json table = nlohmann::json::object();
        for (auto item : split_items(trim(v.substr(1, v.size() - 2)), line)) {
            const auto eq = item.find('=');
            if (eq == std::string_view::npos) toml_error(line, "expected key = value in inline table");
            const auto parts = split_key(item.substr(0, eq), line);
            nlohmann::json* target = &table;
            for (std::size_t i = 0; i + 1 < parts.size(); ++i) target = &(*target)[parts[i]];
            if (target->contains(parts.back())) toml_error(line, "duplicate key '" + parts.back() + "'");
            (*target)[parts.back()] = toml_value(item.substr(eq + 1), line);
        }
        return table;
    }
    return toml_scalar(v, line);
}

std::vector<std::string> split_key(std::string_view key, int line) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= key.size(); ++i) {
        if (i == key.size() || key[i] == '.') {
            auto p = trim(key.substr(start, i - start));
            if (p.size() >= 2 && p.front() == '"' && p.back() == '"') p = p.substr(1, p.size() - 2);
            if (p.empty()) toml_error(line, "empty key");
            parts.emplace_back(p);
            start = i + 1;
        }
    }
    return parts;
}

}  // namespace

std::string format_double(double x) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, p);
}

double parse_decimal(std::string_view text, std::string_view field) {
    text = trim(text);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double x = 0.0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), x);
    if (ec != std::errc() || p != text.data() + text.size() || text.empty()) {
        throw Error(ErrorCode::Config,
                    "field '" + std::string(field) + "': not a decimal number: '" + std::string(text) + "'");
    }
    return x;
}

int CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    CsvTable t;
    std::string line;
    int lineno = 0;
    auto split = [](std::string_view s) {
        std::vector<std::string> out;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= s.size(); ++i) {
            if (i == s.size() || s[i] == ',') {
                out.emplace_back(trim(s.substr(start, i - start)));
                start = i + 1;
            }
        }
        return out;
    };
    while (std::getline(in, line)) {
        ++lineno;
        auto s = trim(line);
        if (s.empty() || s.front() == '#') continue;
        auto cells = split(s);
        if (t.header.empty()) {
            t.header = std::move(cells);
            continue;
        }
        if (cells.size() != t.header.size()) {
            throw Error(ErrorCode::Config, path.string() + " line " + std::to_string(lineno) +
                                               ": expected " + std::to_string(t.header.size()) + " cells");
        }
        std::vector<double> row;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            row.push_back(parse_decimal(cells[i], path.string() + ":" + std::to_string(lineno) + ":" +
                                                      t.header[i]));
        }
        t.rows.push_back(std::move(row));
    }
    require(!t.header.empty(), ErrorCode::Config, path.string() + ": missing header");
    return t;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorCode::Config, "cannot write " + path.string());
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
        out << '\n';
    }
}

nlohmann::json parse_toml(std::string_view text) {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* table = &root;
    int lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        ++lineno;
        auto line = trim(strip_comment(text.substr(pos, end - pos)));
        pos = end + 1;
        if (line.empty()) continue;
        if (line.front() == '[') {
            const bool array = line.size() >= 2 && line[1] == '[';
            const std::size_t open = array ? 2 : 1;
            const bool closed = array ? line.size() >= 5 && line.substr(line.size() - 2) == "]]"
                                      : line.size() >= 3 && line.back() == ']';
            if (!closed) toml_error(lineno, "malformed table header");
            const auto parts = split_key(line.substr(open, line.size() - 2 * open), lineno);
            table = &root;
            for (std::size_t i = 0; i < parts.size(); ++i) {
                nlohmann::json& next = (*table)[parts[i]];
                if (array && i + 1 == parts.size()) {
                    if (next.is_null()) next = nlohmann::json::array();
                    if (!next.is_array()) toml_error(lineno, "'" + parts[i] + "' is not an array of tables");
                    next.push_back(nlohmann::json::object());
                    table = &next.back();
                    break;
                }
                if (next.is_null()) next = nlohmann::json::object();
                if (next.is_array() && !next.empty() && next.back().is_object()) {
                    table = &next.back();
                    continue;
                }
                if (!next.is_object()) toml_error(lineno, "'" + parts[i] + "' is not a table");
                table = &next;
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) toml_error(lineno, "expected key = value");
        const auto parts = split_key(line.substr(0, eq), lineno);
        nlohmann::json* target = table;
        for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
            nlohmann::json& next = (*target)[parts[i]];
            if (next.is_null()) next = nlohmann::json::object();
            target = &next;
        }
        if (target->contains(parts.back())) toml_error(lineno, "duplicate key '" + parts.back() + "'");
        (*target)[parts.back()] = toml_value(line.substr(eq + 1), lineno);
    }
    return root;
}

nlohmann::json load_document(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    if (path.extension() == ".toml") return parse_toml(text);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::Config, path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorCode::Config, "cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

}  // namespace nlspde
