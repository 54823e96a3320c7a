#ifndef ETAP_IO_UTIL_HPP_
#define ETAP_IO_UTIL_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace etap::io {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double x);
double parse_double(const std::string& s);

std::string read_file(const std::filesystem::path& path);
/// Writes atomically-ish: content goes to a temp file that is then renamed.
void write_file(const std::filesystem::path& path, const std::string& content);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path,
                 const std::vector<nlohmann::json>& lines);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace etap::io

#endif  // ETAP_IO_UTIL_HPP_
