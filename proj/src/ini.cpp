#include "moeprune/ini.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace moeprune {

namespace {
std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}
}  // namespace

IniData parse_ini(const std::string& text) {
    IniData out;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": empty section name");
            out[section];
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": empty key");
        out[section][key] = value;
    }
    return out;
}

IniData parse_ini_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_ini(buf.str());
}

std::string ini_get(const IniData& ini, const std::string& section, const std::string& key,
                    const std::string& fallback) {
    auto s = ini.find(section);
    if (s == ini.end()) return fallback;
    auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
}

int ini_get_int(const IniData& ini, const std::string& section, const std::string& key,
                int fallback) {
    std::string v = ini_get(ini, section, key, "");
    if (v.empty()) return fallback;
    size_t pos = 0;
    int out = std::stoi(v, &pos);
    if (pos != v.size())
        throw std::invalid_argument("config [" + section + "] " + key +
                                    ": not an integer: " + v);
    return out;
}

double ini_get_double(const IniData& ini, const std::string& section, const std::string& key,
                      double fallback) {
    std::string v = ini_get(ini, section, key, "");
    if (v.empty()) return fallback;
    size_t pos = 0;
    double out = std::stod(v, &pos);
    if (pos != v.size())
        throw std::invalid_argument("config [" + section + "] " + key +
                                    ": not a number: " + v);
    return out;
}

}  // namespace moeprune
