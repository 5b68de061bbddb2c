#include "hypharm/config.hpp"

#include "hypharm/boundary.hpp"
#include "hypharm/hopf.hpp"

#include <boost/algorithm/string/trim.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace hypharm {

namespace {

using VK = ValueKind;

std::string key_of(const std::string& section, const std::string& key) { return section + "." + key; }

bool parse_double_strict(const std::string& s, double& v) {
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return !s.empty() && ec == std::errc() && p == s.data() + s.size() && std::isfinite(v);
}

template <class Int>
bool parse_int_strict(const std::string& s, Int& v) {
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return !s.empty() && ec == std::errc() && p == s.data() + s.size();
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(boost::algorithm::trim_copy(item));
  return out;
}

}  // namespace

const std::vector<FieldSpec>& config_schema() {
  static const std::vector<FieldSpec> schema{
      {"run", "command", VK::choice, "extend", {"extend", "flow", "verify", "constants", "hopf"}},
      {"run", "seed", VK::unsigned_integer, "20241016", {}},
      {"run", "preset", VK::choice, "standard", {"standard", "paper_ball"}},
      {"map", "boundary", VK::boundary_map, "identity", {}},
      {"quadrature", "nodes_per_axis", VK::integer, "32", {}},
      {"quadrature", "jitter", VK::number, "1e-09", {}},
      {"quadrature", "refine_target", VK::number, "1e-10", {}},
      {"quadrature", "max_nodes", VK::integer, "128", {}},
      {"lattice", "xs", VK::number_list, "-1, -0.5, 0, 0.5, 1", {}},
      {"lattice", "ts", VK::number_list, "0.1, 0.3, 1, 3", {}},
      {"grid", "radius", VK::number, "0.9", {}},
      {"grid", "resolution", VK::integer, "17", {}},
      {"grid", "tol", VK::number, "0.001", {}},
      {"grid", "max_iter", VK::integer, "20000", {}},
      {"grid", "stencil", VK::choice, "fd4", {"fd4", "fd2", "geodesic"}},
      {"grid", "cfl", VK::number, "0.1", {}},
      {"sampler", "scheme", VK::choice, "fibonacci", {"fibonacci", "random"}},
      {"sampler", "count", VK::integer, "2048", {}},
      {"sampler", "radial_nodes", VK::integer, "64", {}},
      {"verify", "suite", VK::choice, "green", {"green", "chain", "all"}},
      {"verify", "radii", VK::number_list, "0.3, 0.5, 0.8", {}},
      {"verify", "green_tol", VK::number, "0.0001", {}},
      {"verify", "checkpoint", VK::text, "", {}},
      {"verify", "r", VK::number, "0.5", {}},
      {"verify", "chain_green_tol", VK::number, "0.001", {}},
      {"ledger", "K", VK::ledger, "", {"measure"}},
      {"ledger", "q", VK::ledger, "", {"oracle"}},
      {"ledger", "T", VK::ledger, "", {"measure"}},
      {"ledger", "D", VK::ledger, "", {}},
      {"ledger", "r0", VK::ledger, "", {}},
      {"oracle", "K1", VK::number, "2", {}},
      {"oracle", "samples", VK::integer, "100000", {}},
      {"hopf", "n_min", VK::integer, "2", {}},
      {"hopf", "n_max", VK::integer, "12", {}},
      {"hopf", "points", VK::integer, "100", {}},
      {"hopf", "boundary", VK::circle_map, "wobble(0.1, 1)", {}},
      {"hopf", "control", VK::circle_map, "mobius(0.3, -0.2, 0.7)", {}},
      {"hopf", "radius", VK::number, "0.6", {}},
      {"hopf", "resolution", VK::integer, "41", {}},
      {"hopf", "tol", VK::number, "1e-08", {}},
      {"hopf", "grid", VK::integer, "41", {}},
      {"hopf", "ratio_limit", VK::number, "10", {}},
      {"output", "dir", VK::text, "out", {}, false},
  };
  return schema;
}

ExperimentConfig::ExperimentConfig() {
  for (const FieldSpec& f : config_schema()) values_[key_of(f.section, f.key)] = f.fallback;
}

const FieldSpec& ExperimentConfig::spec(const std::string& section, const std::string& key) const {
  for (const FieldSpec& f : config_schema())
    if (f.section == section && f.key == key) return f;
  throw config_error(fmt::format("{}: unknown key [{}] {}", source_, section, key));
}

int ExperimentConfig::line(const std::string& section, const std::string& key) const {
  const auto it = lines_.find(key_of(section, key));
  return it == lines_.end() ? 0 : it->second;
}

void ExperimentConfig::fail(const std::string& section, const std::string& key, const std::string& what) const {
  const int l = line(section, key);
  const std::string where = l > 0 ? fmt::format("{}:{}", source_, l) : source_;
  throw config_error(fmt::format("{}: [{}] {}: {}", where, section, key, what));
}

void ExperimentConfig::validate(const FieldSpec& f, const std::string& v) const {
  auto bad = [&](const std::string& what) { fail(f.section, f.key, what); };
  switch (f.kind) {
    case VK::text:
      break;
    case VK::integer: {
      long x = 0;
      if (!parse_int_strict(v, x)) bad("expected an integer, got '" + v + "'");
      break;
    }
    case VK::unsigned_integer: {
      std::uint64_t x = 0;
      if (!parse_int_strict(v, x)) bad("expected a non-negative integer, got '" + v + "'");
      break;
    }
    case VK::number: {
      double x = 0;
      if (!parse_double_strict(v, x)) bad("expected a finite number, got '" + v + "'");
      break;
    }
    case VK::number_list: {
      double x = 0;
      for (const std::string& item : split_list(v))
        if (!parse_double_strict(item, x)) bad("expected a comma-separated list of numbers, got '" + v + "'");
      break;
    }
    case VK::choice:
      if (std::find(f.choices.begin(), f.choices.end(), v) == f.choices.end()) {
        std::string opts;
        for (const auto& c : f.choices) opts += (opts.empty() ? "" : " | ") + c;
        bad(fmt::format("expected one of {}, got '{}'", opts, v));
      }
      break;
    case VK::boundary_map:
      try {
        parse_boundary_map(v);
      } catch (const std::exception& e) {
        bad(e.what());
      }
      break;
    case VK::circle_map:
      try {
        parse_circle_map(v);
      } catch (const std::exception& e) {
        bad(e.what());
      }
      break;
    case VK::ledger: {
      double x = 0;
      if (v.empty() || parse_double_strict(v, x)) break;
      if (std::find(f.choices.begin(), f.choices.end(), v) != f.choices.end()) break;
      std::string opts = "a number";
      for (const auto& c : f.choices) opts += " | " + c;
      bad(fmt::format("expected {} (or empty for missing), got '{}'", opts, v));
    }
  }
}

ExperimentConfig ExperimentConfig::parse(std::string_view text, std::string source) {
  namespace pt = boost::property_tree;
  ExperimentConfig c;
  c.source_ = std::move(source);
  pt::ptree tree;
  {
    std::istringstream is{std::string(text)};
    try {
      pt::ini_parser::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
      throw config_error(fmt::format("{}:{}: {}", c.source_, e.line(), e.message()));
    }
  }
  // Line numbers for error messages; the syntax itself was checked above.
  {
    std::istringstream is{std::string(text)};
    std::string raw, section;
    int n = 0;
    while (std::getline(is, raw)) {
      ++n;
      const std::string l = boost::algorithm::trim_copy(raw);
      if (l.empty() || l[0] == '#' || l[0] == ';') continue;
      if (l[0] == '[') {
        section = boost::algorithm::trim_copy(l.substr(1, l.find(']') - 1));
        continue;
      }
      c.lines_[key_of(section, boost::algorithm::trim_copy(l.substr(0, l.find('='))))] = n;
    }
  }
  bool any = false;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw config_error(fmt::format("{}:{}: key '{}' outside a section", c.source_, c.line("", section), section));
    }
    const bool known_section = std::any_of(config_schema().begin(), config_schema().end(),
                                           [&](const FieldSpec& f) { return f.section == section; });
    if (!known_section) throw config_error(fmt::format("{}: unknown section [{}]", c.source_, section));
    any = any || !body.empty();
    for (const auto& [key, node] : body) {
      const int l = c.line(section, key);
      bool known = false;
      for (const FieldSpec& f : config_schema()) known = known || (f.section == section && f.key == key);
      if (!known) throw config_error(fmt::format("{}:{}: unknown key [{}] {}", c.source_, l, section, key));
      const std::string v = boost::algorithm::trim_copy(node.get_value<std::string>());
      c.validate(c.spec(section, key), v);
      c.values_[key_of(section, key)] = v;
    }
  }
  if (!any) throw config_error(c.source_ + ": config is empty");
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string text = ss.str();
  if (auto embedded = embedded_config(text)) return parse(*embedded, path + " (embedded)");
  return parse(text, path);
}

std::string ExperimentConfig::serialize(bool include_output) const {
  std::string out, section;
  for (const FieldSpec& f : config_schema()) {
    if (!include_output && !f.run_identity) continue;
    if (f.section != section) {
      out += (section.empty() ? "" : "\n") + fmt::format("[{}]\n", f.section);
      section = f.section;
    }
    out += fmt::format("{} = {}\n", f.key, values_.at(key_of(f.section, f.key)));
  }
  return out;
}

std::string ExperimentConfig::hash() const { return sha256_hex(serialize(false)); }

const std::string& ExperimentConfig::get(const std::string& section, const std::string& key) const {
  spec(section, key);
  return values_.at(key_of(section, key));
}

void ExperimentConfig::set(const std::string& section, const std::string& key, const std::string& value) {
  validate(spec(section, key), value);
  values_[key_of(section, key)] = value;
}

bool ExperimentConfig::explicitly_set(const std::string& section, const std::string& key) const {
  return lines_.count(key_of(section, key)) > 0;
}

long ExperimentConfig::integer(const std::string& section, const std::string& key) const {
  long v = 0;
  if (!parse_int_strict(get(section, key), v)) fail(section, key, "not an integer");
  return v;
}

std::uint64_t ExperimentConfig::unsigned_integer(const std::string& section, const std::string& key) const {
  std::uint64_t v = 0;
  if (!parse_int_strict(get(section, key), v)) fail(section, key, "not a non-negative integer");
  return v;
}

double ExperimentConfig::number(const std::string& section, const std::string& key) const {
  double v = 0;
  if (!parse_double_strict(get(section, key), v)) fail(section, key, "not a number");
  return v;
}

std::vector<double> ExperimentConfig::numbers(const std::string& section, const std::string& key) const {
  std::vector<double> out;
  for (const std::string& item : split_list(get(section, key))) {
    double v = 0;
    if (!parse_double_strict(item, v)) fail(section, key, "not a list of numbers");
    out.push_back(v);
  }
  return out;
}

std::string output_header(const ExperimentConfig& c, std::string_view kind) {
  std::string h = fmt::format("# hypharm {}\n# config_sha256 {}\n# seed {}\n", kind, c.hash(), c.get("run", "seed"));
  std::istringstream is(c.serialize(false));
  std::string l;
  while (std::getline(is, l)) h += "#| " + l + "\n";
  return h;
}

std::optional<std::string> embedded_config(std::string_view text) {
  std::string out;
  bool found = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view l = text.substr(pos, end - pos);
    if (l.rfind("#|", 0) == 0) {
      found = true;
      std::string_view body = l.substr(2);
      if (!body.empty() && body.front() == ' ') body.remove_prefix(1);
      out.append(body);
      out += '\n';
    }
    pos = end + 1;
  }
  if (!found) return std::nullopt;
  return out;
}

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr)) {
    throw std::runtime_error("sha256 failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

}  // namespace hypharm
