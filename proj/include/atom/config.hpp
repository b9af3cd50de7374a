#ifndef ATOM_CONFIG_HPP_
#define ATOM_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace atom {

// key=value configuration text with '#' comments. Keys keep insertion
// order so round-trips are stable.
class Config {
 public:
  Config() = default;

  static Config parse_string(const std::string& text);
  static Config parse_file(const std::string& path);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key,
                         const std::string& fallback = "") const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  uint64_t get_uint64(const std::string& key, uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& value);
  void set_double(const std::string& key, double value);
  void set_int(const std::string& key, int64_t value);

  const std::vector<std::pair<std::string, std::string>>& items() const {
    return items_;
  }
  std::string to_string() const;
  void save(const std::string& path) const;

 private:
  const std::string* find(const std::string& key) const;
  std::vector<std::pair<std::string, std::string>> items_;
};

}  // namespace atom

#endif  // ATOM_CONFIG_HPP_
