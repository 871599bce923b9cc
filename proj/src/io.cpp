#include "gendermine/io.hpp"

#include "gendermine/text.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gendermine::io {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string to_jsonl(const std::vector<json>& rows) {
    std::string out;
    for (const auto& row : rows) {
        out += row.dump();
        out.push_back('\n');
    }
    return out;
}

void write_jsonl(const fs::path& path, const std::vector<json>& rows) { write_file_atomic(path, to_jsonl(rows)); }

std::size_t for_each_line(const fs::path& path, const std::function<void(std::string_view, std::size_t)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0, visited = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (text::trim(line).empty()) continue;
        fn(line, lineno);
        ++visited;
    }
    return visited;
}

std::vector<json> read_jsonl(const fs::path& path) {
    std::vector<json> rows;
    for_each_line(path, [&](std::string_view line, std::size_t lineno) {
        try {
            rows.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    });
    return rows;
}

std::string file_digest(const fs::path& path) { return text::sha256_hex(read_file(path)); }

void write_json(const fs::path& path, const json& value) { write_file_atomic(path, value.dump(2) + "\n"); }

json read_json(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

} // namespace gendermine::io
