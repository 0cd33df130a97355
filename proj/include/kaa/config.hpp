#pragma once

// Flat key=value run configuration with [section] headers.
//
//   [model]
//   backbone = gat
//   variant = kaa
//
// Keys are addressed as "section.key"; keys before any header have no prefix.

#include <filesystem>
#include <map>
#include <string>

#include "kaa/gnn.hpp"
#include "kaa/graph.hpp"

namespace kaa {

class Config {
 public:
  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& path);

  /// "section.key=value"; the flag value wins over the file.
  void apply_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  /// Canonical text form (sorted, sectioned); parse(to_text()) == *this.
  std::string to_text() const;

  bool operator==(const Config&) const = default;

 private:
  std::map<std::string, std::string> values_;
};

/// Everything `train` needs, resolved from a Config.
struct TrainSetup {
  ModelConfig model;
  TrainConfig train;
  GraphCollection data;
  std::string dataset;
  std::filesystem::path out_dir;
};

/// Reads [data], [model], [train] and [output]; unknown keys are rejected.
TrainSetup train_setup_from_config(const Config& cfg);

}  // namespace kaa
