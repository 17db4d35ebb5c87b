#pragma once
// Plain-text run configuration: `key = value` lines grouped under
// `[section]` headers. Unknown keys, misplaced keys and malformed values are
// errors that carry the offending line number.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace eqreg {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::size_t line, const std::string& msg)
      : std::runtime_error(line ? "config line " + std::to_string(line) + ": " + msg : "config: " + msg), line(line) {}
  std::size_t line;
};

struct RunConfig {
  // [group]
  std::string group = "cyclic";
  std::size_t group_order = 4;
  std::string action = "rotate90";  // rotate90 | trivial | permutation
  // [model]
  std::string subspace = "conv";  // dense | conv
  std::string support = "full3x3";
  std::string padding = "circular";
  std::vector<std::size_t> channels{1, 2, 2};
  std::string activation = "tanh";
  std::string loss = "cross_entropy";
  // [data]
  std::string dataset = "synth_inv";  // synth_inv | synth_asym | idx
  std::string idx_images;
  std::string idx_labels;
  std::size_t limit = 500;
  std::size_t n_samples = 500;
  std::size_t image_size = 6;
  std::uint64_t data_seed = 1;
  // [dynamics]
  std::vector<std::string> modes{"augmented"};
  std::string integrator = "euler";
  double step_size = 1e-2;
  std::size_t num_steps = 500;
  std::size_t record_every = 1;
  // [train]
  std::vector<double> gamma_list{1e-4, 1e-2, 1e0, 1e2};
  double lr = 1e-3;
  std::size_t batch_size = 10;
  std::size_t epochs = 2;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double perturb_scale = 0.1;
  std::size_t metrics_every = 0;
  // [verify]
  std::size_t trials = 10;
  std::uint64_t verify_seed = 7;
  // [output]
  std::string output_dir = "out";
};

namespace detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (!quoted && s[i] == '#') return s.substr(0, i);
  }
  return s;
}

inline std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

inline std::vector<std::string> split_list(std::string v) {
  v = trim(v);
  if (v.size() >= 2 && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : v) {
    if (c == '"') quoted = !quoted;
    if (c == ',' && !quoted) {
      out.push_back(unquote(trim(cur)));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.push_back(unquote(trim(cur)));
  return out;
}

template <class T>
T parse_number(const std::string& raw, std::size_t line, const std::string& key) {
  const std::string v = unquote(trim(raw));
  std::istringstream is(v);
  T x{};
  if constexpr (std::is_unsigned_v<T>) {
    if (!v.empty() && v[0] == '-') throw ConfigError(line, "key '" + key + "' must be non-negative");
  }
  is >> x;
  if (!is || !(is >> std::ws).eof()) throw ConfigError(line, "key '" + key + "': cannot parse '" + v + "'");
  return x;
}

struct Entry {
  std::string value;
  std::size_t line;
};

inline const std::map<std::string, std::vector<std::string>>& section_keys() {
  static const std::map<std::string, std::vector<std::string>> k{
      {"group", {"group", "group_order", "action"}},
      {"model", {"subspace", "support", "padding", "channels", "activation", "loss"}},
      {"data", {"dataset", "idx_images", "idx_labels", "limit", "n_samples", "image_size", "data_seed"}},
      {"dynamics", {"mode", "integrator", "step_size", "num_steps", "record_every"}},
      {"train", {"gamma", "gamma_list", "lr", "batch_size", "epochs", "seeds", "perturb_scale", "metrics_every"}},
      {"verify", {"trials", "verify_seed"}},
      {"output", {"output_dir"}},
  };
  return k;
}

inline bool key_in(const std::string& section, const std::string& key) {
  const auto& keys = section_keys();
  if (section.empty()) {
    for (const auto& [_, ks] : keys)
      if (std::find(ks.begin(), ks.end(), key) != ks.end()) return true;
    return false;
  }
  auto it = keys.find(section);
  return it != keys.end() && std::find(it->second.begin(), it->second.end(), key) != it->second.end();
}

}  // namespace detail

/// Parses configuration text. Keys may appear at top level or under their
/// own section.
inline RunConfig parse_config(std::istream& in) {
  using namespace detail;
  std::map<std::string, Entry> kv;
  std::string section;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(strip_comment(raw));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(line, "malformed section header");
      section = trim(s.substr(1, s.size() - 2));
      if (!section_keys().count(section)) throw ConfigError(line, "unknown section '" + section + "'");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(line, "expected 'key = value'");
    const std::string key = trim(s.substr(0, eq));
    const std::string val = trim(s.substr(eq + 1));
    if (key.empty()) throw ConfigError(line, "empty key");
    if (!key_in(section, key)) {
      if (key_in("", key)) throw ConfigError(line, "key '" + key + "' does not belong in section [" + section + "]");
      throw ConfigError(line, "unknown key '" + key + "'");
    }
    if (kv.count(key)) throw ConfigError(line, "duplicate key '" + key + "'");
    kv[key] = {val, line};
  }

  RunConfig c;
  auto str = [&](const char* k, std::string& dst) {
    if (auto it = kv.find(k); it != kv.end()) dst = unquote(it->second.value);
  };
  auto num = [&](const char* k, auto& dst) {
    if (auto it = kv.find(k); it != kv.end())
      dst = parse_number<std::decay_t<decltype(dst)>>(it->second.value, it->second.line, k);
  };
  auto list = [&](const char* k, auto& dst) {
    if (auto it = kv.find(k); it != kv.end()) {
      using T = typename std::decay_t<decltype(dst)>::value_type;
      dst.clear();
      for (const auto& item : split_list(it->second.value)) {
        if constexpr (std::is_same_v<T, std::string>) dst.push_back(item);
        else dst.push_back(parse_number<T>(item, it->second.line, k));
      }
      if (dst.empty()) throw ConfigError(it->second.line, std::string("key '") + k + "' needs at least one value");
    }
  };
  str("group", c.group);
  num("group_order", c.group_order);
  str("action", c.action);
  str("subspace", c.subspace);
  str("support", c.support);
  str("padding", c.padding);
  list("channels", c.channels);
  str("activation", c.activation);
  str("loss", c.loss);
  str("dataset", c.dataset);
  str("idx_images", c.idx_images);
  str("idx_labels", c.idx_labels);
  num("limit", c.limit);
  num("n_samples", c.n_samples);
  num("image_size", c.image_size);
  num("data_seed", c.data_seed);
  list("mode", c.modes);
  str("integrator", c.integrator);
  num("step_size", c.step_size);
  num("num_steps", c.num_steps);
  num("record_every", c.record_every);
  if (kv.count("gamma") && kv.count("gamma_list"))
    throw ConfigError(kv["gamma_list"].line, "give either 'gamma' or 'gamma_list', not both");
  if (auto it = kv.find("gamma"); it != kv.end()) c.gamma_list = {parse_number<double>(it->second.value, it->second.line, "gamma")};
  list("gamma_list", c.gamma_list);
  num("lr", c.lr);
  num("batch_size", c.batch_size);
  num("epochs", c.epochs);
  list("seeds", c.seeds);
  num("perturb_scale", c.perturb_scale);
  num("metrics_every", c.metrics_every);
  num("trials", c.trials);
  num("verify_seed", c.verify_seed);
  str("output_dir", c.output_dir);

  auto line_of = [&](const char* k) { return kv.count(k) ? kv[k].line : std::size_t{0}; };
  if (c.padding != "circular") throw ConfigError(line_of("padding"), "only padding = \"circular\" is supported");
  if (c.group != "cyclic") throw ConfigError(line_of("group"), "only group = \"cyclic\" is supported");
  if (c.group_order == 0) throw ConfigError(line_of("group_order"), "group_order must be positive");
  for (double g : c.gamma_list)
    if (!(g >= 0.0)) throw ConfigError(line_of("gamma_list") + line_of("gamma"), "gamma must be non-negative");
  if (c.channels.size() < 1) throw ConfigError(line_of("channels"), "channels needs at least one entry");
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file '" + path + "'");
  return parse_config(f);
}

}  // namespace eqreg
