#pragma once

#include <string>

#include <json.hpp>

namespace ablate {

std::string sha256_hex(const std::string& bytes);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

nlohmann::ordered_json load_json(const std::string& path);
void save_json(const std::string& path, const nlohmann::ordered_json& j);

std::string file_sha256(const std::string& path);

}  // namespace ablate
