#pragma once

// Experiment configuration: key = value lines grouped in [sections]. Every
// known key has a default; the canonical text lists all of them in schema
// order, so parse(serialize(c)).serialize() == serialize(c).

#include "hypharm/core.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hypharm {

enum class ValueKind { text, integer, unsigned_integer, number, number_list, choice, boundary_map, circle_map, ledger };

struct FieldSpec {
  std::string section;
  std::string key;
  ValueKind kind;
  std::string fallback;
  std::vector<std::string> choices;  // for ValueKind::choice; ledger keywords otherwise
  bool run_identity = true;          // false: excluded from the embedded config and its hash
};

const std::vector<FieldSpec>& config_schema();

class ExperimentConfig {
 public:
  ExperimentConfig();

  // Throws config_error with "source:line:" prefixes.
  static ExperimentConfig parse(std::string_view text, std::string source = "<config>");
  // Reads a config file, or the config embedded in a hypharm output file.
  static ExperimentConfig load(const std::string& path);

  std::string serialize(bool include_output = true) const;
  // SHA-256 of serialize(false).
  std::string hash() const;

  const std::string& get(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key, const std::string& value);
  bool explicitly_set(const std::string& section, const std::string& key) const;

  long integer(const std::string& section, const std::string& key) const;
  std::uint64_t unsigned_integer(const std::string& section, const std::string& key) const;
  double number(const std::string& section, const std::string& key) const;
  std::vector<double> numbers(const std::string& section, const std::string& key) const;

  const std::string& source() const { return source_; }
  int line(const std::string& section, const std::string& key) const;
  [[noreturn]] void fail(const std::string& section, const std::string& key, const std::string& what) const;

 private:
  const FieldSpec& spec(const std::string& section, const std::string& key) const;
  void validate(const FieldSpec& f, const std::string& value) const;

  std::string source_ = "<config>";
  std::map<std::string, std::string> values_;
  std::map<std::string, int> lines_;
};

// Header lines for every output file: kind, hash, seed and the embedded
// canonical config ("#| " lines).
std::string output_header(const ExperimentConfig& c, std::string_view kind);
// The "#| " payload of an output file, if any.
std::optional<std::string> embedded_config(std::string_view text);

std::string sha256_hex(std::string_view data);

}  // namespace hypharm
