#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bsteer/errors.hpp"

namespace bsteer {

using Json = nlohmann::json;

// Declarative run configuration: a JSON document with fixed sections, each a
// flat object of scalars (plus small integer lists). Unknown sections and
// unknown keys are rejected, so typos fail loudly instead of silently using
// defaults.
//
// Option precedence, highest first: explicit command-line flag, environment
// variable BSTEER_<NAME>, config file entry, built-in default. Every value a
// command resolves is echoed into an effective-config document embedded in
// its report.
inline const std::map<std::string, std::set<std::string>>& config_schema() {
  static const std::map<std::string, std::set<std::string>> schema = {
      {"steer", {"alpha", "delta", "kappa", "dt", "mode", "grad_floor", "qp_tol", "steps"}},
      {"train",
       {"lambda_unsafe", "epsilon_margin", "learning_rate", "batch_size", "epochs", "seed",
        "optimizer", "heads", "hidden_dims", "train_fraction"}},
      {"verify", {"dims", "scenarios_per_dim", "steps", "dt", "tol_scale", "seed", "suite"}},
      {"bench",
       {"trials", "warmup", "heads", "dim", "hidden_dims", "seed", "ref_iterations",
        "ref_learning_rate", "ref_penalty"}},
      {"paths", {"model", "data", "out", "trajectory", "history"}},
  };
  return schema;
}

namespace detail {

inline double parse_number(const std::string& text, const std::string& origin) {
  const char* s = text.c_str();
  char* end = nullptr;
  double v = std::strtod(s, &end);
  if (end == s || *end != '\0')
    throw FormatError(origin + " is not a number: '" + text + "'");
  return v;
}

inline long long parse_integer(const std::string& text, const std::string& origin) {
  const char* s = text.c_str();
  char* end = nullptr;
  long long v = std::strtoll(s, &end, 10);
  if (end == s || *end != '\0')
    throw FormatError(origin + " is not an integer: '" + text + "'");
  return v;
}

inline std::vector<int> parse_int_list(const std::string& text, const std::string& origin) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(static_cast<int>(parse_integer(item, origin)));
  return out;
}

}  // namespace detail

class ConfigDocument {
 public:
  ConfigDocument() : doc_(Json::object()) {}

  static ConfigDocument parse(const std::string& text, const std::string& origin) {
    Json doc = Json::parse(text, nullptr, false);
    if (doc.is_discarded()) throw FormatError(origin + ": not valid JSON");
    if (!doc.is_object()) throw FormatError(origin + ": top level must be an object");
    const auto& schema = config_schema();
    for (const auto& [section, body] : doc.items()) {
      auto it = schema.find(section);
      if (it == schema.end())
        throw FormatError(origin + ": unknown config section '" + section + "'");
      if (!body.is_object())
        throw FormatError(origin + ": section '" + section + "' must be an object");
      for (const auto& [key, value] : body.items()) {
        (void)value;
        if (!it->second.count(key))
          throw FormatError(origin + ": unknown config key '" + section + "." + key + "'");
      }
    }
    ConfigDocument out;
    out.doc_ = std::move(doc);
    return out;
  }

  static ConfigDocument load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path);
  }

  const Json* find(const std::string& section, const std::string& key) const {
    auto s = doc_.find(section);
    if (s == doc_.end()) return nullptr;
    auto k = s->find(key);
    if (k == s->end()) return nullptr;
    return &*k;
  }

  const Json& raw() const { return doc_; }

 private:
  Json doc_;
};

inline std::optional<std::string> env_override(const std::string& suffix) {
  std::string name = "BSTEER_" + suffix;
  const char* v = std::getenv(name.c_str());
  if (!v) return std::nullopt;
  return std::string(v);
}

// Resolves options layer by layer and keeps the effective-config echo.
// `env_suffix` names the variable after the flag it mirrors (flag --alpha,
// variable BSTEER_ALPHA), while (section, key) addresses the config file.
class LayeredOptions {
 public:
  explicit LayeredOptions(ConfigDocument file = {}) : file_(std::move(file)) {}

  double number(std::optional<double> flag, const std::string& env_suffix,
                const std::string& section, const std::string& key, double fallback) {
    double v = fallback;
    if (flag) {
      v = *flag;
    } else if (auto env = env_override(env_suffix)) {
      v = detail::parse_number(*env, "environment variable BSTEER_" + env_suffix);
    } else if (const Json* j = file_.find(section, key)) {
      if (!j->is_number())
        throw FormatError("config key " + section + "." + key + " must be a number");
      v = j->get<double>();
    }
    effective_[section][key] = v;
    return v;
  }

  long long integer(std::optional<long long> flag, const std::string& env_suffix,
                    const std::string& section, const std::string& key, long long fallback) {
    long long v = fallback;
    if (flag) {
      v = *flag;
    } else if (auto env = env_override(env_suffix)) {
      v = detail::parse_integer(*env, "environment variable BSTEER_" + env_suffix);
    } else if (const Json* j = file_.find(section, key)) {
      if (!j->is_number_integer())
        throw FormatError("config key " + section + "." + key + " must be an integer");
      v = j->get<long long>();
    }
    effective_[section][key] = v;
    return v;
  }

  std::string text(std::optional<std::string> flag, const std::string& env_suffix,
                   const std::string& section, const std::string& key, std::string fallback) {
    std::string v = std::move(fallback);
    if (flag) {
      v = *flag;
    } else if (auto env = env_override(env_suffix)) {
      v = *env;
    } else if (const Json* j = file_.find(section, key)) {
      if (!j->is_string())
        throw FormatError("config key " + section + "." + key + " must be a string");
      v = j->get<std::string>();
    }
    effective_[section][key] = v;
    return v;
  }

  // Lists pass as comma-separated text on the flag/environment layers and as
  // JSON integer arrays in the file.
  std::vector<int> int_list(std::optional<std::string> flag, const std::string& env_suffix,
                            const std::string& section, const std::string& key,
                            std::vector<int> fallback) {
    std::vector<int> v = std::move(fallback);
    if (flag) {
      v = detail::parse_int_list(*flag, "flag value for " + section + "." + key);
    } else if (auto env = env_override(env_suffix)) {
      v = detail::parse_int_list(*env, "environment variable BSTEER_" + env_suffix);
    } else if (const Json* j = file_.find(section, key)) {
      if (!j->is_array())
        throw FormatError("config key " + section + "." + key + " must be an integer array");
      v.clear();
      for (const auto& item : *j) {
        if (!item.is_number_integer())
          throw FormatError("config key " + section + "." + key + " must be an integer array");
        v.push_back(item.get<int>());
      }
    }
    effective_[section][key] = v;
    return v;
  }

  Json& effective() { return effective_; }
  const Json& effective() const { return effective_; }

 private:
  ConfigDocument file_;
  Json effective_ = Json::object();
};

}  // namespace bsteer
