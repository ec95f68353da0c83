#pragma once

// Flat "key = value" run configuration covering ModelConfig and TrainConfig.

#include <fstream>
#include <istream>
#include <stdexcept>
#include <string>

#include "stance/model.hpp"
#include "stance/trainer.hpp"

namespace stance {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// '#' starts a comment; unknown keys are errors naming the key.
inline RunConfig parse_run_config(std::istream& is,
                                  const std::string& origin = "config") {
  RunConfig rc;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (!apply_key(rc.model, key, value) && !apply_key(rc.train, key, value)) {
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": unknown config key '" + key + "'");
      }
    } catch (const std::invalid_argument& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " +
                        e.what());
    }
  }
  return rc;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  return parse_run_config(in, path);
}

// Every field with its resolved value.
inline std::string format_run_config(const RunConfig& rc) {
  std::string out;
  for (const auto& [k, v] : to_key_values(rc.model)) {
    out += k + " = " + v + "\n";
  }
  for (const auto& [k, v] : to_key_values(rc.train)) {
    out += k + " = " + v + "\n";
  }
  return out;
}

}  // namespace stance
