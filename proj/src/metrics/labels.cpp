#include <charconv>
#include <fstream>
#include <sstream>

#include "sat/error.hpp"
#include "sat/metrics.hpp"

namespace sat {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == sep && !quoted) {
            fields.push_back(trim(field));
            field.clear();
        } else {
            field += c;
        }
    }
    fields.push_back(trim(field));
    return fields;
}

std::optional<double> to_double(const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) return std::nullopt;
        return v;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

int to_int(const std::string& s, const std::string& context) {
    int v = 0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end) throw ArgumentError(context + ": '" + s + "' is not an integer class id");
    return v;
}

std::ifstream open(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open label file: " + path.string());
    return in;
}

} // namespace

std::vector<int> parse_class_list(const std::string& text) {
    std::vector<int> ids;
    std::string token;
    auto flush = [&] {
        const std::string t = trim(token);
        if (!t.empty()) ids.push_back(to_int(t, "class list"));
        token.clear();
    };
    for (char c : text) {
        if (c == ',' || c == ';' || c == ' ' || c == '\t' || c == '"') flush();
        else token += c;
    }
    flush();
    return ids;
}

std::map<std::string, std::vector<Event>> load_strong_labels(const std::filesystem::path& path) {
    auto in = open(path);
    std::map<std::string, std::vector<Event>> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty() || line[0] == '#') continue;
        const auto f = split(line, '\t');
        const std::string where = path.string() + ":" + std::to_string(line_no);
        if (f.size() < 4) throw ArgumentError(where + ": expected clip_id, onset_s, offset_s, class_id");
        const auto onset = to_double(f[1]);
        if (!onset) {
            if (line_no == 1) continue; // header
            throw ArgumentError(where + ": onset is not a number");
        }
        const auto offset = to_double(f[2]);
        if (!offset) throw ArgumentError(where + ": offset is not a number");
        if (*onset < 0.0 || !(*offset > *onset)) throw ArgumentError(where + ": require 0 <= onset < offset");
        out[f[0]].push_back({to_int(f[3], where), *onset, *offset});
    }
    return out;
}

std::map<std::string, std::vector<int>> load_weak_labels(const std::filesystem::path& path) {
    auto in = open(path);
    std::map<std::string, std::vector<int>> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty() || line[0] == '#') continue;
        const auto f = split(line, ',');
        std::vector<int> ids;
        try {
            for (std::size_t i = 1; i < f.size(); ++i) {
                const auto part = parse_class_list(f[i]);
                ids.insert(ids.end(), part.begin(), part.end());
            }
        } catch (const ArgumentError&) {
            if (line_no == 1) continue; // header
            throw;
        }
        auto& dst = out[f[0]];
        dst.insert(dst.end(), ids.begin(), ids.end());
    }
    return out;
}

std::map<int, std::string> load_class_names(const std::filesystem::path& path) {
    auto in = open(path);
    std::map<int, std::string> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto f = split(line, ',');
        if (f.size() < 2) throw ArgumentError(path.string() + ":" + std::to_string(line_no) + ": expected id,name");
        int id = 0;
        const auto* end = f[0].data() + f[0].size();
        const auto [ptr, ec] = std::from_chars(f[0].data(), end, id);
        if (ec != std::errc{} || ptr != end) {
            if (line_no == 1) continue; // header
            throw ArgumentError(path.string() + ":" + std::to_string(line_no) + ": bad class id");
        }
        out[id] = f.back(); // also accepts "index,mid,display_name" tables
    }
    return out;
}

} // namespace sat
