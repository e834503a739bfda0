#pragma once

#include <map>
#include <string>

namespace moeprune {

// Flat-section key = value configuration text; '#' starts a comment.
using IniData = std::map<std::string, std::map<std::string, std::string>>;

IniData parse_ini(const std::string& text);
IniData parse_ini_file(const std::string& path);

std::string ini_get(const IniData& ini, const std::string& section, const std::string& key,
                    const std::string& fallback);
int ini_get_int(const IniData& ini, const std::string& section, const std::string& key,
                int fallback);
double ini_get_double(const IniData& ini, const std::string& section, const std::string& key,
                      double fallback);

}  // namespace moeprune
