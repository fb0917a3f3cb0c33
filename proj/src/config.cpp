/* Copyright 2026 The Omni-AD Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "omniad/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "omniad/errors.hpp"

namespace omniad {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + text + "'");
}

template <typename T>
std::string format_number(T value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

std::string format_depths(const std::array<std::size_t, 4>& d) {
  return format_number(d[0]) + "," + format_number(d[1]) + "," + format_number(d[2]) + "," +
         format_number(d[3]);
}

std::array<std::size_t, 4> parse_depths(const std::string& key, const std::string& text) {
  std::array<std::size_t, 4> out{};
  std::size_t start = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto sep = text.find_first_of(",-", start);
    if ((i < 3) == (sep == std::string::npos)) {
      throw ConfigError("config key '" + key + "': expected four stage depths, got '" + text + "'");
    }
    out[i] = parse_number<std::size_t>(key, text.substr(start, sep == std::string::npos ? std::string::npos
                                                                                          : sep - start));
    start = sep + 1;
  }
  return out;
}

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

#define OMNIAD_NUM_FIELD(name, member, type)                                                        \
  Field {                                                                                           \
    name, [](const RunConfig& c) { return format_number(c.member); },                               \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_number<type>(k, v); } \
  }
#define OMNIAD_BOOL_FIELD(name, member)                                                            \
  Field {                                                                                          \
    name, [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); },             \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_bool(k, v); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      OMNIAD_NUM_FIELD("height", network.height, std::size_t),
      OMNIAD_NUM_FIELD("width", network.width, std::size_t),
      OMNIAD_NUM_FIELD("channels", network.channels, std::size_t),
      Field{"depths", [](const RunConfig& c) { return format_depths(c.network.depths); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.network.depths = parse_depths(k, v); }},
      OMNIAD_NUM_FIELD("token_count", network.tokens, std::size_t),
      OMNIAD_NUM_FIELD("heads", network.heads, std::size_t),
      Field{"decouple_order", [](const RunConfig& c) { return to_string(c.network.order); },
            [](RunConfig& c, const std::string&, const std::string& v) {
              c.network.order = parse_decouple_order(v);
            }},
      OMNIAD_BOOL_FIELD("global_branch", network.global_enabled),
      OMNIAD_BOOL_FIELD("local_branch", network.local_enabled),
      Field{"feature_provider", [](const RunConfig& c) { return to_string(c.network.provider); },
            [](RunConfig& c, const std::string&, const std::string& v) {
              c.network.provider = parse_provider_kind(v);
            }},
      OMNIAD_NUM_FIELD("provider_seed", network.provider_seed, std::uint64_t),
      Field{"feature_dir", [](const RunConfig& c) { return c.network.feature_dir; },
            [](RunConfig& c, const std::string&, const std::string& v) { c.network.feature_dir = v; }},
      OMNIAD_NUM_FIELD("init_std", network.init_std, double),
      OMNIAD_NUM_FIELD("bn_momentum", network.bn_momentum, double),
      OMNIAD_NUM_FIELD("corpus_seed", corpus.seed, std::uint64_t),
      OMNIAD_NUM_FIELD("n_classes", corpus.n_classes, std::size_t),
      OMNIAD_NUM_FIELD("n_train", corpus.n_train, std::size_t),
      OMNIAD_NUM_FIELD("n_test", corpus.n_test, std::size_t),
      OMNIAD_NUM_FIELD("steps", train.steps, std::size_t),
      OMNIAD_NUM_FIELD("batch_size", train.batch_size, std::size_t),
      OMNIAD_NUM_FIELD("seed", train.seed, std::uint64_t),
      OMNIAD_NUM_FIELD("lr", train.lr, double),
      OMNIAD_NUM_FIELD("weight_decay", train.weight_decay, double),
      OMNIAD_NUM_FIELD("beta1", train.beta1, double),
      OMNIAD_NUM_FIELD("beta2", train.beta2, double),
      OMNIAD_NUM_FIELD("eps", train.eps, double),
      OMNIAD_NUM_FIELD("sigma", eval.sigma, double),
      OMNIAD_NUM_FIELD("fpr_cap", eval.fpr_cap, double),
  };
  return table;
}

#undef OMNIAD_NUM_FIELD
#undef OMNIAD_BOOL_FIELD

}  // namespace

AdamWOptions TrainConfig::adamw() const {
  AdamWOptions o;
  o.lr = lr;
  o.beta1 = beta1;
  o.beta2 = beta2;
  o.eps = eps;
  o.weight_decay = weight_decay;
  return o;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(*this, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.emplace_back(f.key);
  return out;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    cfg.set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

void RunConfig::to_file(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file " + path.string());
  out << serialize();
}

void RunConfig::validate() const {
  network.validate();
  if (corpus.n_classes == 0 || corpus.n_train == 0 || corpus.n_test == 0) {
    throw ConfigError("config keys 'n_classes', 'n_train', 'n_test' must be positive");
  }
  if (train.batch_size == 0) throw ConfigError("config key 'batch_size' must be positive");
  if (!(train.lr > 0.0)) throw ConfigError("config key 'lr' must be positive");
  if (!(eval.sigma >= 0.0)) throw ConfigError("config key 'sigma' must be non-negative");
  if (!(eval.fpr_cap > 0.0 && eval.fpr_cap <= 1.0)) throw ConfigError("config key 'fpr_cap' must be in (0, 1]");
}

}  // namespace omniad
