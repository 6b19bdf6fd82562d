#pragma once

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <gem/image.hpp>

namespace gemcli {

using nlohmann::json;

// Bad flags, bad config keys, missing inputs: exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string kebab(const std::string& camel) {
  std::string out;
  for (char c : camel) {
    if (std::isupper(static_cast<unsigned char>(c))) {
      out += '-';
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else {
      out += c;
    }
  }
  return out;
}

struct OptionSpec {
  std::string key;
  json defaultValue;  // its type decides how flag text is parsed; null means string
  std::string help;
  bool positional = false;
};

namespace detail {

inline json parseScalar(const std::string& text, const json& like, const std::string& key) {
  auto bad = [&] { return UsageError("--" + kebab(key) + ": cannot parse '" + text + "'"); };
  try {
    std::size_t used = 0;
    if (like.is_boolean()) {
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      throw bad();
    }
    if (like.is_number_integer()) {
      const long long v = std::stoll(text, &used);
      if (used != text.size()) throw bad();
      if (like.is_number_unsigned() && v < 0) throw bad();
      return v;
    }
    if (like.is_number()) {
      const double v = std::stod(text, &used);
      if (used != text.size()) throw bad();
      return v;
    }
  } catch (const std::logic_error&) {
    throw bad();
  }
  return text;
}

inline json parseFlag(const std::string& text, const json& like, const std::string& key) {
  if (!like.is_array()) return parseScalar(text, like, key);
  const json element = like.empty() ? json(0.0) : like.front();
  json out = json::array();
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parseScalar(item, element, key));
  return out;
}

inline bool sameKind(const json& value, const json& like) {
  if (like.is_null()) return value.is_null() || value.is_string();
  if (like.is_number()) return value.is_number() && (!like.is_number_integer() || value.is_number_integer());
  if (like.is_array()) {
    if (!value.is_array()) return false;
    if (like.empty()) return true;
    for (const auto& v : value)
      if (!sameKind(v, like.front())) return false;
    return true;
  }
  return value.type() == like.type();
}

}  // namespace detail

// A subcommand whose options resolve as flags > --config JSON > defaults.
class Command {
 public:
  Command(CLI::App& parent, const std::string& name, const std::string& description, std::vector<OptionSpec> specs)
      : specs_(std::move(specs)) {
    app_ = parent.add_subcommand(name, description);
    app_->add_option("--config", configPath_, "JSON file with option values (keys as listed in the echoed config)");
    for (const auto& s : specs_) {
      std::string& slot = raw_[s.key];
      std::string help = s.help;
      if (!s.defaultValue.is_null()) help += " [default: " + s.defaultValue.dump() + "]";
      if (s.positional) {
        app_->add_option(s.key, slot, help);
      } else if (s.defaultValue.is_boolean()) {
        flagOptions_[s.key] = app_->add_flag("--" + kebab(s.key), flags_[s.key], help);
        continue;
      } else {
        app_->add_option("--" + kebab(s.key), slot, help);
      }
      options_[s.key] = app_->get_option(s.positional ? s.key : "--" + kebab(s.key));
    }
  }

  CLI::App* app() const { return app_; }

  // Fully resolved configuration. Throws UsageError on unknown keys or bad types.
  json resolve() const {
    json cfg = json::object();
    for (const auto& s : specs_) cfg[s.key] = s.defaultValue;
    if (!configPath_.empty()) {
      json file;
      try {
        file = json::parse(gem::readFile(configPath_));
      } catch (const json::parse_error& e) {
        throw UsageError("--config: " + std::string(e.what()));
      } catch (const gem::Error& e) {
        throw UsageError("--config: " + std::string(e.what()));
      }
      if (!file.is_object()) throw UsageError("--config: expected a JSON object");
      for (const auto& [key, value] : file.items()) {
        const auto it = std::find_if(specs_.begin(), specs_.end(), [&](const OptionSpec& s) { return s.key == key; });
        if (it == specs_.end()) throw UsageError("--config: unknown key '" + key + "'");
        if (!detail::sameKind(value, it->defaultValue)) throw UsageError("--config: wrong type for '" + key + "'");
        cfg[key] = value;
      }
    }
    for (const auto& s : specs_) {
      if (s.defaultValue.is_boolean()) {
        if (flagOptions_.at(s.key)->count() > 0) cfg[s.key] = flags_.at(s.key);
      } else if (options_.at(s.key)->count() > 0) {
        cfg[s.key] = detail::parseFlag(raw_.at(s.key), s.defaultValue, s.key);
      }
    }
    return cfg;
  }

 private:
  CLI::App* app_ = nullptr;
  std::vector<OptionSpec> specs_;
  std::string configPath_;
  std::map<std::string, std::string> raw_;
  std::map<std::string, bool> flags_;
  std::map<std::string, CLI::Option*> options_;
  std::map<std::string, CLI::Option*> flagOptions_;
};

// Typed access to a resolved config.
inline std::string str(const json& cfg, const std::string& key) {
  return cfg.at(key).is_null() ? std::string() : cfg.at(key).get<std::string>();
}

inline std::string requiredStr(const json& cfg, const std::string& key) {
  const std::string v = str(cfg, key);
  if (v.empty()) throw UsageError("missing required option " + key);
  return v;
}

}  // namespace gemcli
