#include "atom/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "atom/common.hpp"

namespace atom {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::parse_string(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    check(eq != std::string::npos, "config line ", line_no,
          ": expected key=value, got '", line, "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    check(!key.empty(), "config line ", line_no, ": empty key");
    cfg.set(key, value);
  }
  return cfg;
}

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "cannot open config file: ", path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

const std::string* Config::find(const std::string& key) const {
  for (const auto& [k, v] : items_) {
    if (k == key) return &v;
  }
  return nullptr;
}

bool Config::has(const std::string& key) const { return find(key) != nullptr; }

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
  const std::string* v = find(key);
  return v ? *v : fallback;
}

double Config::get_double(const std::string& key, double fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  try {
    size_t pos = 0;
    const double d = std::stod(*v, &pos);
    check(pos == v->size(), "config key '", key, "': trailing characters in '",
          *v, "'");
    return d;
  } catch (const std::invalid_argument&) {
    fail("config key '", key, "': not a number: '", *v, "'");
  }
}

int Config::get_int(const std::string& key, int fallback) const {
  const double d = get_double(key, fallback);
  return static_cast<int>(d);
}

uint64_t Config::get_uint64(const std::string& key, uint64_t fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  try {
    return std::stoull(*v);
  } catch (const std::invalid_argument&) {
    fail("config key '", key, "': not an integer: '", *v, "'");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  if (*v == "1" || *v == "true" || *v == "yes" || *v == "on") return true;
  if (*v == "0" || *v == "false" || *v == "no" || *v == "off") return false;
  fail("config key '", key, "': not a boolean: '", *v, "'");
}

void Config::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : items_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  items_.emplace_back(key, value);
}

void Config::set_double(const std::string& key, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  set(key, buf);
}

void Config::set_int(const std::string& key, int64_t value) {
  set(key, std::to_string(value));
}

std::string Config::to_string() const {
  std::string out;
  for (const auto& [k, v] : items_) {
    out += k;
    out += "=";
    out += v;
    out += "\n";
  }
  return out;
}

void Config::save(const std::string& path) const {
  std::ofstream out(path);
  check(out.good(), "cannot write config file: ", path);
  out << to_string();
}

}  // namespace atom
