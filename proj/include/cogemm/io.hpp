#pragma once

#include <string>

#include <json.hpp>

namespace cogemm {

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

// Parse errors and missing files surface as ValidationError.
nlohmann::json read_json_file(const std::string& path);

// Pretty-printed with a trailing newline; stable for identical inputs.
void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace cogemm
