#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace bayrel {

// key = value sections, '#' comments, order-preserving. Shared by the
// dataset manifest and the CLI config file.
struct IniSection {
  std::string name;
  std::vector<std::pair<std::string, std::string>> entries;

  const std::string* find(const std::string& key) const;
};

std::vector<IniSection> parse_ini(const std::filesystem::path& path);
std::string trim(const std::string& s);

// Strict numeric parsing helpers: whole-string, C locale.
double parse_double(const std::string& s, const std::string& context);
std::size_t parse_size(const std::string& s, const std::string& context);

}  // namespace bayrel
