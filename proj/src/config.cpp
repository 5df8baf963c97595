#include "isolate/config.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace isolate {

namespace {

constexpr const char* kConfigSchema = "#isolate-config=1";

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

double parse_double(const std::string& s, const std::string& key) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw ConfigError("bad numeric value '" + s + "' for " + key);
  }
  return v;
}

long parse_long(const std::string& s, const std::string& key) {
  char* end = nullptr;
  long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0') {
    throw ConfigError("bad integer value '" + s + "' for " + key);
  }
  return v;
}

bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("bad boolean value '" + s + "' for " + key);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T, typename Fmt>
std::string join(const T& values, Fmt fmt) {
  std::string out;
  bool first = true;
  for (const auto& v : values) {
    if (!first) out += ",";
    out += fmt(v);
    first = false;
  }
  return out;
}

// key -> value per section, preserving nothing but the typed content.
using Sections = std::map<std::string, std::map<std::string, std::string>>;

Sections parse_sections(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  bool first_line = true;
  std::string section;
  Sections sections;
  while (std::getline(in, line)) {
    line = trim(line);
    if (first_line) {
      if (line != kConfigSchema) {
        throw ConfigError("config must begin with " + std::string(kConfigSchema));
      }
      first_line = false;
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("expected 'key = value', got '" + line + "'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      throw ConfigError("key '" + key + "' appears before any [section]");
    }
    sections[section][key] = value;
  }
  if (first_line) {
    throw ConfigError("config must begin with " + std::string(kConfigSchema));
  }
  return sections;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  Sections sections = parse_sections(text);
  RunConfig cfg;
  cfg.k_range.clear();
  cfg.treated_states.clear();
  cfg.control_states.clear();
  cfg.gammas.clear();

  for (const auto& [section, entries] : sections) {
    if (section == "match") {
      for (const auto& [key, value] : entries) {
        if (key == "set_size") {
          cfg.set_size = int(parse_long(value, key));
        } else if (key == "k_range") {
          for (const auto& v : split(value, ',')) {
            cfg.k_range.push_back(int(parse_long(v, key)));
          }
        } else if (key == "treated_states") {
          for (const auto& v : split(value, ',')) {
            cfg.treated_states.insert(int(parse_long(v, key)));
          }
        } else if (key == "control_states") {
          for (const auto& v : split(value, ',')) {
            cfg.control_states.insert(int(parse_long(v, key)));
          }
        } else if (key == "require_no_prior_treated_state") {
          cfg.require_no_prior_treated_state = parse_bool(value, key);
        } else if (key == "exact_variables") {
          cfg.exact_variables = split(value, ',');
        } else if (key == "distance_covariates") {
          cfg.distance_covariates = split(value, ',');
        } else if (key == "penalty_unresolvable") {
          cfg.penalty_unresolvable = parse_bool(value, key);
        } else if (key.rfind("derived.", 0) == 0) {
          auto rest = key.substr(8);
          auto dot = rest.rfind('.');
          if (dot == std::string::npos) {
            throw ConfigError("expected derived.<name>.source|breaks, got '" +
                              key + "'");
          }
          std::string name = rest.substr(0, dot);
          std::string field = rest.substr(dot + 1);
          if (field == "source") {
            cfg.derived[name].source = value;
          } else if (field == "breaks") {
            for (const auto& v : split(value, ',')) {
              cfg.derived[name].breaks.push_back(parse_double(v, key));
            }
          } else {
            throw ConfigError("unknown derived field '" + field + "'");
          }
        } else {
          throw ConfigError("unknown key '" + key + "' in [match]");
        }
      }
    } else if (section == "statistic") {
      for (const auto& [key, value] : entries) {
        if (key == "kind") {
          if (value == "mean") {
            cfg.statistic = StatisticKind::kMeanDifference;
          } else if (value == "huber") {
            cfg.statistic = StatisticKind::kHuberM;
          } else {
            throw ConfigError("statistic kind must be mean or huber");
          }
        } else if (key == "huber_cutoff") {
          cfg.huber_cutoff = parse_double(value, key);
        } else if (key == "scale") {
          cfg.scale = parse_double(value, key);
        } else {
          throw ConfigError("unknown key '" + key + "' in [statistic]");
        }
      }
    } else if (section == "infer") {
      for (const auto& [key, value] : entries) {
        if (key == "gammas") {
          for (const auto& v : split(value, ',')) {
            cfg.gammas.push_back(parse_double(v, key));
          }
        } else if (key == "alpha") {
          cfg.alpha = parse_double(value, key);
        } else if (key == "direction") {
          if (value == "less") {
            cfg.direction = Direction::kTreatedLower;
          } else if (value == "greater") {
            cfg.direction = Direction::kTreatedHigher;
          } else {
            throw ConfigError("direction must be less or greater");
          }
        } else if (key == "bracket_lo") {
          cfg.bracket_lo = parse_double(value, key);
        } else if (key == "bracket_hi") {
          cfg.bracket_hi = parse_double(value, key);
        } else {
          throw ConfigError("unknown key '" + key + "' in [infer]");
        }
      }
    } else {
      throw ConfigError("unknown config section [" + section + "]");
    }
  }
  if (cfg.k_range.empty()) cfg.k_range = {2};
  if (cfg.treated_states.empty()) cfg.treated_states = {2};
  if (cfg.control_states.empty()) cfg.control_states = {1};
  if (cfg.gammas.empty()) cfg.gammas = {1.0};

  for (int s : cfg.treated_states) {
    if (cfg.control_states.count(s)) {
      throw ConfigError("state " + std::to_string(s) +
                        " is both treated and control");
    }
  }
  for (const auto& [name, def] : cfg.derived) {
    if (def.source.empty()) {
      throw ConfigError("derived variable '" + name + "' has no source");
    }
    if (def.breaks.empty() ||
        !std::is_sorted(def.breaks.begin(), def.breaks.end())) {
      throw ConfigError("derived variable '" + name +
                        "' needs ascending breaks");
    }
  }
  return cfg;
}

std::string serialize_run_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << kConfigSchema << "\n";
  out << "[match]\n";
  out << "set_size = " << cfg.set_size << "\n";
  out << "k_range = "
      << join(cfg.k_range, [](int v) { return std::to_string(v); }) << "\n";
  out << "treated_states = "
      << join(cfg.treated_states, [](int v) { return std::to_string(v); })
      << "\n";
  out << "control_states = "
      << join(cfg.control_states, [](int v) { return std::to_string(v); })
      << "\n";
  out << "require_no_prior_treated_state = "
      << (cfg.require_no_prior_treated_state ? "true" : "false") << "\n";
  if (!cfg.exact_variables.empty()) {
    out << "exact_variables = "
        << join(cfg.exact_variables, [](const std::string& s) { return s; })
        << "\n";
  }
  for (const auto& [name, def] : cfg.derived) {
    out << "derived." << name << ".source = " << def.source << "\n";
    out << "derived." << name << ".breaks = " << join(def.breaks, fmt_double)
        << "\n";
  }
  if (!cfg.distance_covariates.empty()) {
    out << "distance_covariates = "
        << join(cfg.distance_covariates,
                [](const std::string& s) { return s; })
        << "\n";
  }
  out << "penalty_unresolvable = "
      << (cfg.penalty_unresolvable ? "true" : "false") << "\n";
  out << "[statistic]\n";
  out << "kind = "
      << (cfg.statistic == StatisticKind::kMeanDifference ? "mean" : "huber")
      << "\n";
  out << "huber_cutoff = " << fmt_double(cfg.huber_cutoff) << "\n";
  if (cfg.scale) out << "scale = " << fmt_double(*cfg.scale) << "\n";
  out << "[infer]\n";
  out << "gammas = " << join(cfg.gammas, fmt_double) << "\n";
  out << "alpha = " << fmt_double(cfg.alpha) << "\n";
  out << "direction = "
      << (cfg.direction == Direction::kTreatedLower ? "less" : "greater")
      << "\n";
  out << "bracket_lo = " << fmt_double(cfg.bracket_lo) << "\n";
  out << "bracket_hi = " << fmt_double(cfg.bracket_hi) << "\n";
  return out.str();
}

SimSpec parse_sim_spec(const std::string& text) {
  Sections sections = parse_sections(text);
  SimSpec spec;
  for (const auto& [section, entries] : sections) {
    if (section != "simulate") {
      throw ConfigError("unknown sim-spec section [" + section + "]");
    }
    for (const auto& [key, value] : entries) {
      if (key == "n_subjects") {
        spec.n_subjects = parse_long(value, key);
      } else if (key == "n_states") {
        spec.n_states = int(parse_long(value, key));
      } else if (key == "periods") {
        spec.periods = int(parse_long(value, key));
      } else if (key == "max_events") {
        spec.max_events = int(parse_long(value, key));
      } else if (key == "seed") {
        spec.seed = uint64_t(parse_long(value, key));
      } else if (key == "timing_logit0") {
        spec.timing_logit0 = parse_double(value, key);
      } else if (key == "timing_slope") {
        spec.timing_slope = parse_double(value, key);
      } else if (key == "state_logit0") {
        spec.state_logit0 = parse_double(value, key);
      } else if (key == "gamma_true") {
        spec.gamma_true = parse_double(value, key);
      } else if (key == "u_binary") {
        spec.u_binary = parse_bool(value, key);
      } else if (key == "effect_model") {
        if (value == "none") {
          spec.effect_model = EffectModel::kNone;
        } else if (value == "tobit") {
          spec.effect_model = EffectModel::kTobit;
        } else if (value == "proportional") {
          spec.effect_model = EffectModel::kProportional;
        } else {
          throw ConfigError("effect_model must be none, tobit or proportional");
        }
      } else if (key == "tau") {
        spec.tau = parse_double(value, key);
      } else if (key == "beta") {
        spec.beta = parse_double(value, key);
      } else if (key == "outcome_base") {
        spec.outcome_base = parse_double(value, key);
      } else if (key == "outcome_u_slope") {
        spec.outcome_u_slope = parse_double(value, key);
      } else if (key == "outcome_noise") {
        spec.outcome_noise = parse_double(value, key);
      } else if (key == "regions") {
        spec.regions = int(parse_long(value, key));
      } else {
        throw ConfigError("unknown key '" + key + "' in [simulate]");
      }
    }
  }
  return spec;
}

std::string serialize_sim_spec(const SimSpec& spec) {
  std::ostringstream out;
  out << kConfigSchema << "\n[simulate]\n";
  out << "n_subjects = " << spec.n_subjects << "\n";
  out << "n_states = " << spec.n_states << "\n";
  out << "periods = " << spec.periods << "\n";
  out << "max_events = " << spec.max_events << "\n";
  out << "seed = " << spec.seed << "\n";
  out << "timing_logit0 = " << fmt_double(spec.timing_logit0) << "\n";
  out << "timing_slope = " << fmt_double(spec.timing_slope) << "\n";
  out << "state_logit0 = " << fmt_double(spec.state_logit0) << "\n";
  out << "gamma_true = " << fmt_double(spec.gamma_true) << "\n";
  out << "u_binary = " << (spec.u_binary ? "true" : "false") << "\n";
  out << "effect_model = "
      << (spec.effect_model == EffectModel::kNone
              ? "none"
              : spec.effect_model == EffectModel::kTobit ? "tobit"
                                                         : "proportional")
      << "\n";
  out << "tau = " << fmt_double(spec.tau) << "\n";
  out << "beta = " << fmt_double(spec.beta) << "\n";
  out << "outcome_base = " << fmt_double(spec.outcome_base) << "\n";
  out << "outcome_u_slope = " << fmt_double(spec.outcome_u_slope) << "\n";
  out << "outcome_noise = " << fmt_double(spec.outcome_noise) << "\n";
  out << "regions = " << spec.regions << "\n";
  return out.str();
}

std::function<std::string(const HistoryView&, const std::string&)>
make_exact_resolver(const RunConfig& config) {
  auto derived = config.derived;
  return [derived](const HistoryView& view, const std::string& name) {
    auto def = derived.find(name);
    if (def != derived.end()) {
      double value;
      if (parse_event_suffix(def->second.source)) {
        // "<base>_<j>" pins the source to a fixed event index
        value = resolve_history_covariate(view, def->second.source);
      } else if (def->second.source == "event_time") {
        value = view.event(view.k()).event_time;
      } else {
        const auto& tv = view.event(view.k()).tv_covariates;
        auto it = tv.find(def->second.source);
        if (it == tv.end()) {
          throw UnresolvableCovariate("derived variable '" + name +
                                      "' needs tv covariate '" +
                                      def->second.source + "'");
        }
        value = it->second;
      }
      size_t bin = 0;
      while (bin < def->second.breaks.size() &&
             value >= def->second.breaks[bin]) {
        ++bin;
      }
      return "b" + std::to_string(bin);
    }
    const auto& fixed = view.fixed_covariates();
    auto it = fixed.find(name);
    if (it == fixed.end()) {
      throw UnknownVariable("exact variable '" + name +
                            "' is neither derived nor a fixed covariate");
    }
    return it->second;
  };
}

EligibilitySpec make_eligibility(const RunConfig& config) {
  EligibilitySpec elig;
  elig.set_size = config.set_size;
  elig.k_range = config.k_range;
  elig.exact_variables = config.exact_variables;
  elig.exact_resolver = make_exact_resolver(config);

  auto treated_states = config.treated_states;
  auto control_states = config.control_states;
  const bool no_prior = config.require_no_prior_treated_state;

  auto prior_treated = [treated_states](const HistoryView& view) {
    for (int i = 1; i < view.k(); ++i) {
      if (treated_states.count(view.event(i).state)) return true;
    }
    return false;
  };
  elig.treated_predicate = [treated_states, no_prior,
                            prior_treated](const HistoryView& view) {
    if (!treated_states.count(view.state_at_k())) return false;
    return !(no_prior && prior_treated(view));
  };
  elig.control_predicate = [control_states, no_prior,
                            prior_treated](const HistoryView& view) {
    if (!control_states.count(view.state_at_k())) return false;
    return !(no_prior && prior_treated(view));
  };
  return elig;
}

DistanceSpec make_distance_spec(const RunConfig& config) {
  DistanceSpec spec;
  spec.covariate_names = config.distance_covariates;
  spec.penalty_for_unresolvable = config.penalty_unresolvable;
  return spec;
}

StatisticSpec make_statistic_spec(const RunConfig& config) {
  StatisticSpec spec;
  spec.kind = config.statistic;
  spec.huber_cutoff = config.huber_cutoff;
  spec.scale = config.scale;
  return spec;
}

InferenceOptions make_inference_options(const RunConfig& config) {
  InferenceOptions options;
  options.gammas = config.gammas;
  options.alpha = config.alpha;
  options.direction = config.direction;
  options.bracket_lo = config.bracket_lo;
  options.bracket_hi = config.bracket_hi;
  return options;
}

}  // namespace isolate
