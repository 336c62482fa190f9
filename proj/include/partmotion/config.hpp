#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace partmotion {

// Usage / configuration problems; the CLI maps these to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat `key = value` configuration with `#` comments. Parsing is strict:
// a key that is not in the default registry is a hard error.
class Config {
 public:
  static Config defaults();

  void load_file(const std::string& path);
  void load_text(const std::string& text, const std::string& origin = "<text>");
  void set(const std::string& key, const std::string& value);  // unknown key throws

  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  // All keys in sorted order, one `key = value` per line.
  std::string resolved_text() const;
  const std::map<std::string, std::string>& entries() const { return values_; }
  void write_resolved(const std::string& path) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace partmotion
