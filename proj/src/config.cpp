#include "creole/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <system_error>
#include <type_traits>
#include <unistd.h>

#include "creole/error.hpp"
#include "creole/text.hpp"

namespace creole {

namespace fs = std::filesystem;

std::vector<ConfigEntry> parse_config_text(std::string_view text, const std::string& origin) {
  std::vector<ConfigEntry> entries;
  std::set<std::pair<std::string, std::string>> seen;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string_view line = text::trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) throw FormatError(origin, line_no, "malformed section header");
      section = std::string(text::trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw FormatError(origin, line_no, "expected 'key = value'");
    ConfigEntry e{section, std::string(text::trim(line.substr(0, eq))), std::string(text::trim(line.substr(eq + 1))),
                  line_no};
    if (e.key.empty()) throw FormatError(origin, line_no, "empty key");
    if (!seen.insert({e.section, e.key}).second)
      throw FormatError(origin, line_no, "key '" + e.key + "' repeated");
    entries.push_back(std::move(e));
  }
  return entries;
}

std::string to_string(DataMode mode) { return mode == DataMode::mixed ? "mixed" : "creole-only"; }

bool ExperimentConfig::needs_identifier() const {
  return strategy == GroupStrategy::language && mode == DataMode::creole_only;
}

namespace {

std::string field(const ConfigEntry& e) {
  return (e.section.empty() ? std::string() : "[" + e.section + "] ") + e.key;
}

template <typename T>
bool parse_int(std::string_view s, T& out) {
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

bool parse_double(std::string_view s, double& out) {
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

bool parse_bool(std::string_view s, bool& out) {
  if (s == "true" || s == "1" || s == "yes") return out = true, true;
  if (s == "false" || s == "0" || s == "no") return out = false, true;
  return false;
}

class Reader {
 public:
  Reader(ExperimentConfig& cfg, std::vector<std::string>& errors, fs::path base)
      : cfg_(cfg), errors_(errors), base_(std::move(base)) {}

  void apply(const ConfigEntry& e) {
    current_ = &e;
    const std::string& s = e.section;
    const std::string& k = e.key;
    const std::string& v = e.value;
    if (s.empty()) {
      if (k == "seed") return void(get_uint(cfg_.seed));
      if (k == "output") return void(cfg_.output = path(v));
    } else if (s == "data") {
      if (k == "creole") return void(cfg_.creole = path(v));
      if (k == "creole_language") return void(cfg_.creole_language = v);
      if (k.rfind("aux.", 0) == 0 && k.size() > 4) return void(cfg_.aux.push_back({k.substr(4), path(v)}));
      if (k == "mode") {
        if (v == "mixed") cfg_.mode = DataMode::mixed;
        else if (v == "creole-only") cfg_.mode = DataMode::creole_only;
        else error("must be 'mixed' or 'creole-only'");
        return;
      }
      if (k == "target_per_language") {
        std::size_t n = 0;
        if (get_uint(n)) cfg_.target_per_language = n;
        return;
      }
      if (k == "scarce_fraction") return void(get_double(cfg_.scarce_fraction));
      if (k == "dev_ratio") return void(get_double(cfg_.dev_ratio));
      if (k == "dev_count") {
        std::size_t n = 0;
        if (get_uint(n)) cfg_.dev_count = n;
        return;
      }
      if (k == "vocab_size") return void(get_uint(cfg_.vocab_size));
      if (k == "min_count") return void(get_uint(cfg_.min_count));
    } else if (s == "grouping") {
      if (k == "strategy") return parse_enum([&] { cfg_.strategy = parse_group_strategy(v); });
      if (k == "group_count") return void(get_uint(cfg_.group_count));
      if (k == "threshold") return void(get_double(cfg_.threshold));
      if (k == "identifier") return void(cfg_.identifier = path(v));
      if (k.rfind("langid.", 0) == 0 && k.size() > 7)
        return void(cfg_.langid_corpora.push_back({k.substr(7), path(v)}));
      if (k == "langid_n_max") return void(get_uint(cfg_.langid_n_max));
      if (k == "langid_alpha") return void(get_double(cfg_.langid_alpha));
    } else if (s == "train") {
      auto& t = cfg_.train;
      if (k == "objective") return parse_enum([&] { t.objective = parse_objective(v); });
      if (k == "preset") return parse_enum([&] { t.preset = SizePreset::by_name(v); });
      if (k == "steps") return void(get_uint(t.steps));
      if (k == "batch_size") return void(get_uint(t.batch_size));
      if (k == "lr") return void(get_double(t.lr));
      if (k == "weight_decay") return void(get_double(t.weight_decay));
      if (k == "beta1") return void(get_double(t.beta1));
      if (k == "beta2") return void(get_double(t.beta2));
      if (k == "eta_q") return void(get_double(t.eta_q));
      if (k == "mask_rate") return void(get_double(t.mask.rate));
      if (k == "mask_p_mask") return void(get_double(t.mask.p_mask));
      if (k == "mask_p_random") return void(get_double(t.mask.p_random));
      if (k == "mask_p_keep") return void(get_double(t.mask.p_keep));
      if (k == "checkpoint_interval") return void(get_uint(t.checkpoint_interval));
      if (k == "token_weighted_groups") {
        if (!parse_bool(v, t.token_weighted_groups)) error("expected true or false");
        return;
      }
    } else if (s == "eval") {
      if (k == "ks") {
        cfg_.ks.clear();
        for (const auto& part : text::split(v, ',')) {
          int kk = 0;
          if (!parse_int(text::trim(part), kk)) return error("expected a comma-separated list of integers");
          cfg_.ks.push_back(kk);
        }
        return;
      }
      if (k == "dictionary") return void(cfg_.dictionary = path(v));
      if (k == "test") return void(cfg_.test = path(v));
    } else if (s == "tagging") {
      if (k == "train") return void(cfg_.tag_train = path(v));
      if (k == "dev") return void(cfg_.tag_dev = path(v));
      if (k == "test") return void(cfg_.tag_test = path(v));
      if (k == "scheme") return parse_enum([&] { cfg_.tag_scheme = parse_tag_scheme(v); });
      if (k == "epochs") return void(get_uint(cfg_.tagging.epochs));
      if (k == "lr") return void(get_double(cfg_.tagging.lr));
      if (k == "weight_decay") return void(get_double(cfg_.tagging.weight_decay));
      if (k == "batch_size") return void(get_uint(cfg_.tagging.batch_size));
    } else if (s == "divergence") {
      if (k.rfind("pair.", 0) == 0 && k.size() > 5) return read_pair(k.substr(5), v);
      if (k == "train_fraction") return void(get_double(cfg_.pad.train_fraction));
      if (k == "lambda") return void(get_double(cfg_.pad.lambda));
      if (k == "epochs") return void(get_uint(cfg_.pad.epochs));
      if (k == "lr") return void(get_double(cfg_.pad.lr));
      if (k == "min_per_domain") return void(get_uint(cfg_.pad.min_per_domain));
    } else {
      return error("unknown section");
    }
    error("unknown key");
  }

 private:
  void error(const std::string& what) {
    errors_.push_back("line " + std::to_string(current_->line) + ": " + field(*current_) + ": " + what);
  }

  fs::path path(const std::string& v) const {
    const fs::path p(v);
    return p.is_absolute() ? p : base_ / p;
  }

  template <typename T>
  bool get_uint(T& out) {
    T tmp{};
    bool ok = parse_int(current_->value, tmp);
    if constexpr (std::is_signed_v<T>) ok = ok && tmp >= 0;
    if (!ok) {
      error("expected a non-negative integer, got '" + current_->value + "'");
      return false;
    }
    out = tmp;
    return true;
  }

  bool get_double(double& out) {
    if (!parse_double(current_->value, out)) {
      error("expected a number, got '" + current_->value + "'");
      return false;
    }
    return true;
  }

  void parse_enum(const std::function<void()>& f) {
    try {
      f();
    } catch (const std::exception& ex) {
      error(ex.what());
    }
  }

  // language, domain-1, path-1, domain-2, path-2
  void read_pair(const std::string& label, const std::string& v) {
    auto parts = text::split(v, ',');
    if (parts.size() != 5) return error("expected 'language, domain-1, path-1, domain-2, path-2'");
    for (auto& p : parts) p = std::string(text::trim(p));
    cfg_.pad_pairs.push_back({label, parts[0], parts[1], path(parts[2]), parts[3], path(parts[4])});
  }

  ExperimentConfig& cfg_;
  std::vector<std::string>& errors_;
  fs::path base_;
  const ConfigEntry* current_ = nullptr;
};

void require_file(std::vector<std::string>& errors, const std::string& name, const fs::path& p) {
  std::error_code ec;
  if (!fs::is_regular_file(p, ec)) errors.push_back(name + ": file not found: " + p.string());
}

bool writable_location(const fs::path& out) {
  fs::path p = fs::absolute(out);
  std::error_code ec;
  while (!p.empty() && !fs::exists(p, ec)) {
    if (p == p.parent_path()) return false;
    p = p.parent_path();
  }
  return fs::is_directory(p, ec) && ::access(p.c_str(), W_OK) == 0;
}

}  // namespace

std::vector<std::string> check_config(const ExperimentConfig& c) {
  std::vector<std::string> errors;
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };
  auto guarded = [&](const std::function<void()>& f) {
    try {
      f();
    } catch (const std::exception& ex) {
      errors.push_back(ex.what());
    }
  };

  if (c.creole.empty()) errors.push_back("[data] creole: required");
  else require_file(errors, "[data] creole", c.creole);
  check(is_creole_tag(c.creole_language),
        "[data] creole_language: must start with '" + std::string(kCreolePrefix) + "', got '" + c.creole_language + "'");
  std::set<std::string> tags = {c.creole_language};
  for (const auto& a : c.aux) {
    require_file(errors, "[data] aux." + a.language, a.path);
    check(tags.insert(a.language).second, "[data] aux." + a.language + ": language tag collides with another corpus");
  }
  check(c.mode != DataMode::mixed || !c.aux.empty(), "[data] mode: mixed needs at least one aux.<language> corpus");
  check(!c.target_per_language || *c.target_per_language > 0, "[data] target_per_language: must be positive");
  check(c.scarce_fraction > 0.0 && c.scarce_fraction <= 1.0, "[data] scarce_fraction out of range (0, 1]");
  check(c.dev_ratio > 0.0 && c.dev_ratio < 1.0, "[data] dev_ratio out of range (0, 1)");
  check(!c.dev_count || *c.dev_count > 0, "[data] dev_count: must be positive");
  check(c.vocab_size >= 4, "[data] vocab_size: must be at least 4");

  check(c.group_count >= 1 && c.group_count <= 64, "[grouping] group_count out of range [1, 64]");
  check(c.threshold >= 0.0 && c.threshold < 1.0, "[grouping] threshold out of range [0, 1)");
  if (c.identifier) require_file(errors, "[grouping] identifier", *c.identifier);
  for (const auto& l : c.langid_corpora) require_file(errors, "[grouping] langid." + l.language, l.path);
  check(c.langid_n_max >= 1, "[grouping] langid_n_max: must be at least 1");
  check(c.langid_alpha >= 0.0, "[grouping] langid_alpha: must be non-negative");
  if (c.needs_identifier() && !c.identifier && c.langid_corpora.size() < 2)
    errors.push_back(std::string(c.train.objective == Objective::dro ? "objective=dro with " : "") +
                     "strategy=language on creole-only data needs an identifier: set [grouping] identifier "
                     "or at least two [grouping] langid.<language> corpora");
  check(c.langid_corpora.empty() || c.langid_corpora.size() >= 2,
        "[grouping] langid.*: at least two identifier corpora required");

  const auto& t = c.train;
  check(t.mask.rate > 0.0 && t.mask.rate <= 1.0, "mask_rate out of range");
  guarded([&] {
    MaskPolicy m = t.mask;
    m.rate = 0.15;
    m.validate();
  });
  guarded([&] {
    TrainConfig tc = t;
    tc.mask = MaskPolicy{};
    tc.validate();
  });
  check(t.beta1 >= 0.0 && t.beta1 < 1.0, "[train] beta1 out of range [0, 1)");
  check(t.beta2 >= 0.0 && t.beta2 < 1.0, "[train] beta2 out of range [0, 1)");
  check(t.objective != Objective::dro || t.strategy != GroupStrategy::random || c.group_count >= 1,
        "[grouping] group_count: random grouping needs at least one group");

  check(!c.ks.empty(), "[eval] ks: at least one k required");
  for (int k : c.ks) check(k >= 1, "[eval] ks: every k must be positive");
  if (c.dictionary) require_file(errors, "[eval] dictionary", *c.dictionary);
  if (c.test) require_file(errors, "[eval] test", *c.test);

  const int tag_paths = !!c.tag_train + !!c.tag_dev + !!c.tag_test;
  check(tag_paths == 0 || tag_paths == 3, "[tagging] train, dev and test must be given together");
  if (c.tag_train) require_file(errors, "[tagging] train", *c.tag_train);
  if (c.tag_dev) require_file(errors, "[tagging] dev", *c.tag_dev);
  if (c.tag_test) require_file(errors, "[tagging] test", *c.tag_test);
  check(c.tagging.epochs >= 0, "[tagging] epochs: must be non-negative");
  check(c.tagging.lr > 0.0, "[tagging] lr: must be positive");
  check(c.tagging.batch_size > 0, "[tagging] batch_size: must be positive");

  for (const auto& p : c.pad_pairs) {
    require_file(errors, "[divergence] pair." + p.label, p.path1);
    require_file(errors, "[divergence] pair." + p.label, p.path2);
  }
  guarded([&] { c.pad.validate(); });

  if (!c.output.empty()) check(writable_location(c.output), "output: directory not writable: " + c.output.string());
  return errors;
}

ConfigLoad parse_experiment_config(std::string_view text, const fs::path& origin) {
  ConfigLoad load;
  load.config.config_path = origin;
  load.config.config_text = std::string(text);
  std::vector<ConfigEntry> entries;
  try {
    entries = parse_config_text(text, origin.string());
  } catch (const FormatError& e) {
    load.errors.push_back(e.what());
    return load;
  }
  Reader reader(load.config, load.errors, origin.parent_path());
  for (const auto& e : entries) reader.apply(e);
  load.config.train.strategy = load.config.strategy;
  for (auto& e : check_config(load.config)) load.errors.push_back(std::move(e));
  return load;
}

ConfigLoad load_experiment_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    ConfigLoad load;
    load.config.config_path = path;
    load.errors.push_back("config file not found: " + path.string());
    return load;
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (auto bad = text::find_invalid_utf8(text)) {
    ConfigLoad load;
    load.errors.push_back(path.string() + ": invalid UTF-8 at byte " + std::to_string(*bad));
    return load;
  }
  return parse_experiment_config(text, path);
}

std::vector<std::string> validate_config(const fs::path& path) { return load_experiment_config(path).errors; }

RunSeeds RunSeeds::derive(std::uint64_t seed) {
  return {mix_seed(seed, 101), mix_seed(seed, 102), mix_seed(seed, 103), mix_seed(seed, 104),
          mix_seed(seed, 105), mix_seed(seed, 106), mix_seed(seed, 107)};
}

}  // namespace creole
