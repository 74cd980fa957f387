#include "m2pt/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace m2pt {

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError(key + ": expected a nonnegative integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
};

template <typename M>
Field size_field(const char* key, M member) {
  return {key, [member](const RunConfig& c) { return std::to_string(member(c)); },
          [member](RunConfig& c, const std::string& k, const std::string& v) {
            member(c) = static_cast<std::size_t>(parse_uint(k, v));
          }};
}

template <typename M>
Field u64_field(const char* key, M member) {
  return {key, [member](const RunConfig& c) { return std::to_string(member(c)); },
          [member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = parse_uint(k, v); }};
}

template <typename M>
Field double_field(const char* key, M member) {
  return {key, [member](const RunConfig& c) { return format_double(member(c)); },
          [member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = parse_double(k, v); }};
}

template <typename M>
Field bool_field(const char* key, M member) {
  return {key, [member](const RunConfig& c) { return std::string(member(c) ? "true" : "false"); },
          [member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = parse_bool(k, v); }};
}

#define M2PT_MEMBER(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      size_field("vision.layers", M2PT_MEMBER(model.vision.num_layers)),
      size_field("vision.dim", M2PT_MEMBER(model.vision.model_dim)),
      size_field("vision.heads", M2PT_MEMBER(model.vision.num_heads)),
      size_field("vision.patch_rows", M2PT_MEMBER(model.vision.patch_rows)),
      size_field("vision.patch_cols", M2PT_MEMBER(model.vision.patch_cols)),
      size_field("vision.patch_dim", M2PT_MEMBER(model.vision.patch_dim)),
      size_field("language.layers", M2PT_MEMBER(model.language.num_layers)),
      size_field("language.dim", M2PT_MEMBER(model.language.model_dim)),
      size_field("language.heads", M2PT_MEMBER(model.language.num_heads)),
      size_field("language.vocab", M2PT_MEMBER(model.language.vocab_size)),
      size_field("language.max_seq_len", M2PT_MEMBER(model.language.max_seq_len)),
      size_field("prompt.textual_len", M2PT_MEMBER(prompt.textual_len)),
      size_field("prompt.visual_len", M2PT_MEMBER(prompt.visual_len)),
      {"prompt.schedule", [](const RunConfig& c) { return std::string(to_string(c.prompt.schedule)); },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         const auto s = parse_schedule(v);
         if (!s) throw ConfigError(k + ": unknown schedule '" + v + "' (first, odd, top_half, latter_half, all)");
         c.prompt.schedule = *s;
       }},
      {"prompt.init", [](const RunConfig& c) { return std::string(to_string(c.prompt.init.kind)); },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         const auto p = parse_init(v);
         if (!p) throw ConfigError(k + ": unknown init policy '" + v + "' (xavier, normal)");
         c.prompt.init.kind = *p;
       }},
      double_field("prompt.init_sigma", M2PT_MEMBER(prompt.init.sigma)),
      double_field("train.lr", M2PT_MEMBER(train.base_lr)),
      double_field("train.warmup_ratio", M2PT_MEMBER(train.warmup_ratio)),
      size_field("train.epochs", M2PT_MEMBER(train.epochs)),
      size_field("train.batch_size", M2PT_MEMBER(train.batch_size)),
      double_field("train.weight_decay", M2PT_MEMBER(train.weight_decay)),
      double_field("train.clip_norm", M2PT_MEMBER(train.clip_norm)),
      size_field("train.max_steps", M2PT_MEMBER(train.max_steps)),
      size_field("tasks.num_tasks", M2PT_MEMBER(tasks.num_tasks)),
      size_field("tasks.instances_per_task", M2PT_MEMBER(tasks.instances_per_task)),
      u64_field("tasks.seed", M2PT_MEMBER(tasks.seed)),
      double_field("tasks.holdout_fraction", M2PT_MEMBER(tasks.holdout_fraction)),
      double_field("tasks.noise_sigma", M2PT_MEMBER(tasks.noise_sigma)),
      double_field("tasks.data_fraction", M2PT_MEMBER(data_fraction)),
      u64_field("run.seed", M2PT_MEMBER(seed)),
      bool_field("run.head_trainable", M2PT_MEMBER(head_trainable)),
      bool_field("run.interaction_trainable", M2PT_MEMBER(interaction_trainable)),
      bool_field("run.project_prompts", M2PT_MEMBER(project_prompts)),
      size_field("run.eval_max_new_tokens", M2PT_MEMBER(eval_max_new_tokens)),
  };
  return table;
}

#undef M2PT_MEMBER

const Field& find_field(const std::string& key) {
  for (const Field& f : fields()) {
    if (key == f.key) return f;
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

}  // namespace

void RunConfig::validate() const {
  model.vision.validate();
  model.language.validate();
  prompt.validate(true);
  train.validate();
  if (tasks.num_tasks < 2) throw ConfigError("tasks.num_tasks must be at least 2");
  if (tasks.instances_per_task < 1) throw ConfigError("tasks.instances_per_task must be at least 1");
  if (!(tasks.holdout_fraction > 0.0 && tasks.holdout_fraction < 1.0)) {
    throw ConfigError("tasks.holdout_fraction must lie in (0, 1)");
  }
  if (!(tasks.noise_sigma >= 0.0) || !std::isfinite(tasks.noise_sigma)) {
    throw ConfigError("tasks.noise_sigma must be nonnegative");
  }
  if (!(data_fraction > 0.0 && data_fraction <= 1.0)) {
    throw ConfigError("tasks.data_fraction must lie in (0, 1]");
  }
  if (eval_max_new_tokens < 1) throw ConfigError("run.eval_max_new_tokens must be at least 1");
  if (model.language.vocab_size < tokens::required_vocab(tasks.num_tasks)) {
    throw ConfigError("language.vocab (" + std::to_string(model.language.vocab_size) + ") is below the " +
                      std::to_string(tokens::required_vocab(tasks.num_tasks)) + " tokens needed by " +
                      std::to_string(tasks.num_tasks) + " tasks");
  }
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  find_field(key).set(*this, key, value);
}

std::string RunConfig::get(const std::string& key) const { return find_field(key).get(*this); }

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.emplace_back(f.key);
  return out;
}

std::string RunConfig::echo() const {
  std::ostringstream os;
  std::string section;
  for (const Field& f : fields()) {
    const std::string key = f.key;
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) os << '\n';
      os << '[' << sec << "]\n";
      section = sec;
    }
    os << key.substr(dot + 1) << " = " << f.get(*this) << '\n';
  }
  return os.str();
}

RunConfig RunConfig::parse(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.message() + " (line " +
                      std::to_string(e.line()) + ")");
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("key '" + section + "' must appear inside a section");
    }
    for (const auto& [key, value] : body) {
      cfg.set(section + "." + key, value.data());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("configuration file not found: " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse(buf.str());
}

}  // namespace m2pt
