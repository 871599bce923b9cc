#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace gendermine::io {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const fs::path& path);

// Writes via a temporary sibling and rename, so readers never see a partial file.
void write_file_atomic(const fs::path& path, std::string_view content);

// One compact JSON object per line, keys sorted, trailing newline.
std::string to_jsonl(const std::vector<json>& rows);
void write_jsonl(const fs::path& path, const std::vector<json>& rows);

// Throws std::runtime_error naming the file and line on a parse failure.
std::vector<json> read_jsonl(const fs::path& path);

// Calls `fn` per non-empty line; returns the number of lines visited.
std::size_t for_each_line(const fs::path& path, const std::function<void(std::string_view, std::size_t)>& fn);

std::string file_digest(const fs::path& path);

// Pretty JSON (2-space indent) with a trailing newline.
void write_json(const fs::path& path, const json& value);
json read_json(const fs::path& path);

} // namespace gendermine::io
