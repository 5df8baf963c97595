#include "isolate/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace isolate {

const char* kCsvSchemaLine = "#isolate-schema=1";

namespace {

using ordered_json = nlohmann::ordered_json;

std::string csv_quote(const std::string& field) {
  bool needs = field.find_first_of(",\"\n\r") != std::string::npos;
  if (!needs) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

// One CSV record honoring quoted fields; supports embedded commas/quotes.
std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c == '\r') {
      // tolerate CRLF
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_number(const std::string& s, const std::string& what) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw SchemaError("bad number '" + s + "' in " + what);
  }
  return v;
}

long parse_integer(const std::string& s, const std::string& what) {
  char* end = nullptr;
  long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0') {
    throw SchemaError("bad integer '" + s + "' in " + what);
  }
  return v;
}

// Lines of `text` with the schema line consumed and verified.
std::vector<std::string> body_lines(const std::string& text,
                                    const std::string& what) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> lines;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      if (line != kCsvSchemaLine) {
        throw SchemaError(what + " must begin with " +
                          std::string(kCsvSchemaLine));
      }
      first = false;
      continue;
    }
    lines.push_back(line);
  }
  if (first) {
    throw SchemaError(what + " must begin with " + std::string(kCsvSchemaLine));
  }
  return lines;
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string write_cohort_csv(const std::vector<SubjectHistory>& cohort) {
  std::set<std::string> fixed_names, tv_names, outcome_names;
  for (const auto& s : cohort) {
    for (const auto& [k, v] : s.fixed_covariates) fixed_names.insert(k);
    for (const auto& [k, v] : s.outcomes) outcome_names.insert(k);
    for (const auto& e : s.events) {
      for (const auto& [k, v] : e.tv_covariates) tv_names.insert(k);
    }
  }

  std::ostringstream out;
  out << kCsvSchemaLine << "\n";
  out << "row,subject_id,event_index,event_time,state";
  for (const auto& n : fixed_names) out << ",fixed:" << csv_quote(n);
  for (const auto& n : tv_names) out << ",tv:" << csv_quote(n);
  for (const auto& n : outcome_names) out << ",out:" << csv_quote(n);
  out << "\n";

  auto blank_columns = [&](size_t count) {
    for (size_t i = 0; i < count; ++i) out << ',';
  };

  for (const auto& s : cohort) {
    out << "subject," << csv_quote(s.subject_id) << ",,,";
    for (const auto& n : fixed_names) {
      out << ',';
      auto it = s.fixed_covariates.find(n);
      if (it != s.fixed_covariates.end()) out << csv_quote(it->second);
    }
    blank_columns(tv_names.size());
    for (const auto& n : outcome_names) {
      out << ',';
      auto it = s.outcomes.find(n);
      if (it != s.outcomes.end()) out << format_number(it->second);
    }
    out << "\n";
    for (const auto& e : s.events) {
      out << "event," << csv_quote(s.subject_id) << ',' << e.event_index << ','
          << format_number(e.event_time) << ',' << e.state;
      blank_columns(fixed_names.size());
      for (const auto& n : tv_names) {
        out << ',';
        auto it = e.tv_covariates.find(n);
        if (it != e.tv_covariates.end()) out << format_number(it->second);
      }
      blank_columns(outcome_names.size());
      out << "\n";
    }
  }
  return out.str();
}

std::vector<SubjectHistory> read_cohort_csv(const std::string& text) {
  auto lines = body_lines(text, "cohort csv");
  if (lines.empty()) throw SchemaError("cohort csv has no header");

  auto header = parse_csv_line(lines[0]);
  if (header.size() < 5 || header[0] != "row" || header[1] != "subject_id" ||
      header[2] != "event_index" || header[3] != "event_time" ||
      header[4] != "state") {
    throw SchemaError("cohort csv header must start with "
                      "row,subject_id,event_index,event_time,state");
  }
  struct Column {
    enum Kind { kFixed, kTv, kOutcome } kind;
    std::string name;
    size_t index;
  };
  std::vector<Column> columns;
  for (size_t i = 5; i < header.size(); ++i) {
    const std::string& h = header[i];
    if (h.rfind("fixed:", 0) == 0) {
      columns.push_back({Column::kFixed, h.substr(6), i});
    } else if (h.rfind("tv:", 0) == 0) {
      columns.push_back({Column::kTv, h.substr(3), i});
    } else if (h.rfind("out:", 0) == 0) {
      columns.push_back({Column::kOutcome, h.substr(4), i});
    } else {
      throw SchemaError("unknown cohort column '" + h + "'");
    }
  }

  std::vector<SubjectHistory> cohort;
  std::map<std::string, size_t> index_of;
  for (size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    auto fields = parse_csv_line(lines[ln]);
    if (fields.size() != header.size()) {
      throw SchemaError("cohort row " + std::to_string(ln + 2) + " has " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(header.size()));
    }
    const std::string& row_kind = fields[0];
    const std::string& id = fields[1];
    if (id.empty()) throw SchemaError("empty subject_id");

    if (row_kind == "subject") {
      if (index_of.count(id)) {
        throw SchemaError("duplicate subject_id '" + id + "'");
      }
      SubjectHistory subject;
      subject.subject_id = id;
      for (const auto& col : columns) {
        const std::string& cell = fields[col.index];
        if (col.kind == Column::kFixed) {
          if (cell.empty()) {
            throw SchemaError("missing fixed covariate '" + col.name +
                              "' for subject '" + id + "'");
          }
          subject.fixed_covariates[col.name] = cell;
        } else if (col.kind == Column::kOutcome) {
          if (!cell.empty()) {
            subject.outcomes[col.name] = parse_number(cell, "outcome");
          }
        }
      }
      index_of[id] = cohort.size();
      cohort.push_back(std::move(subject));
    } else if (row_kind == "event") {
      auto it = index_of.find(id);
      if (it == index_of.end()) {
        throw SchemaError("event row for unknown subject '" + id +
                          "' (subject rows must come first)");
      }
      SubjectHistory& subject = cohort[it->second];
      EventRecord ev;
      ev.event_index = int(parse_integer(fields[2], "event_index"));
      ev.event_time = parse_number(fields[3], "event_time");
      ev.state = int(parse_integer(fields[4], "state"));
      if (ev.state < 1) {
        throw SchemaError("event state must be >= 1 (0 is the interval state)");
      }
      if (ev.event_index != subject.n_events() + 1) {
        throw SchemaError("subject '" + id + "' event indices must be dense " +
                          "1,2,3,...");
      }
      if (!subject.events.empty() &&
          !(ev.event_time > subject.events.back().event_time)) {
        throw SchemaError("subject '" + id +
                          "' event times must be strictly increasing");
      }
      for (const auto& col : columns) {
        if (col.kind != Column::kTv) continue;
        const std::string& cell = fields[col.index];
        if (cell.empty()) {
          throw SchemaError("missing tv covariate '" + col.name +
                            "' at event " + std::to_string(ev.event_index) +
                            " of subject '" + id + "'");
        }
        ev.tv_covariates[col.name] = parse_number(cell, "tv covariate");
      }
      subject.events.push_back(std::move(ev));
    } else {
      throw SchemaError("row kind must be subject or event, got '" + row_kind +
                        "'");
    }
  }
  return cohort;
}

std::string write_design_csv(const MatchDesign& design) {
  std::ostringstream out;
  out << kCsvSchemaLine << "\n";
  out << "set_id,k,stratum,arm,subject_id,distance\n";
  for (const auto& s : design.sets) {
    const std::string stratum = csv_quote(s.stratum.to_string());
    out << s.set_id << ',' << s.event_index << ',' << stratum << ",treated,"
        << csv_quote(s.treated) << ',' << format_number(s.total_distance)
        << "\n";
    for (size_t i = 0; i < s.controls.size(); ++i) {
      out << s.set_id << ',' << s.event_index << ',' << stratum << ",control,"
          << csv_quote(s.controls[i]) << ','
          << format_number(s.control_distances[i]) << "\n";
    }
  }
  return out.str();
}

MatchDesign read_design_csv(const std::string& text) {
  auto lines = body_lines(text, "design csv");
  if (lines.empty() || lines[0] != "set_id,k,stratum,arm,subject_id,distance") {
    throw SchemaError("design csv header must be "
                      "set_id,k,stratum,arm,subject_id,distance");
  }
  MatchDesign design;
  std::map<long, size_t> set_index;
  for (size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    auto fields = parse_csv_line(lines[ln]);
    if (fields.size() != 6) {
      throw SchemaError("design row must have 6 fields");
    }
    const long set_id = parse_integer(fields[0], "set_id");
    const int k = int(parse_integer(fields[1], "k"));
    auto parts = [&] {
      std::vector<std::string> out;
      std::string cur;
      for (char c : fields[2]) {
        if (c == '|') {
          out.push_back(cur);
          cur.clear();
        } else {
          cur += c;
        }
      }
      out.push_back(cur);
      return out;
    }();

    auto it = set_index.find(set_id);
    if (it == set_index.end()) {
      MatchedSet s;
      s.set_id = set_id;
      s.event_index = k;
      s.stratum.event_index = k;
      if (!parts.empty()) {
        s.stratum.exact_values.assign(parts.begin() + 1, parts.end());
      }
      set_index[set_id] = design.sets.size();
      design.sets.push_back(std::move(s));
      it = set_index.find(set_id);
    }
    MatchedSet& s = design.sets[it->second];
    const double dist = parse_number(fields[5], "distance");
    if (fields[3] == "treated") {
      if (!s.treated.empty()) {
        throw SchemaError("set " + std::to_string(set_id) +
                          " has two treated rows");
      }
      s.treated = fields[4];
      s.total_distance = dist;
    } else if (fields[3] == "control") {
      s.controls.push_back(fields[4]);
      s.control_distances.push_back(dist);
    } else {
      throw SchemaError("arm must be treated or control");
    }
  }
  std::set<std::string> members;
  for (const auto& s : design.sets) {
    if (s.treated.empty()) {
      throw SchemaError("set " + std::to_string(s.set_id) +
                        " has no treated row");
    }
    if (s.controls.empty()) {
      throw SchemaError("set " + std::to_string(s.set_id) + " has no controls");
    }
    if (s.set_size() != design.sets.front().set_size()) {
      throw SchemaError("sets must all have the same size; set " +
                        std::to_string(s.set_id) + " differs");
    }
    if (!members.insert(s.treated).second) {
      throw SchemaError("subject '" + s.treated +
                        "' appears in more than one set");
    }
    for (const auto& c : s.controls) {
      if (!members.insert(c).second) {
        throw SchemaError("subject '" + c + "' appears in more than one set");
      }
    }
  }
  if (!design.sets.empty()) {
    design.config_echo.set_size = design.sets.front().set_size();
  }
  return design;
}

std::string write_unmatched_csv(const MatchDesign& design) {
  std::ostringstream out;
  out << kCsvSchemaLine << "\n";
  out << "subject_id,k,reason\n";
  for (const auto& u : design.unmatched_treated) {
    out << csv_quote(u.subject_id) << ',' << u.event_index << ','
        << csv_quote(u.reason) << "\n";
  }
  return out.str();
}

std::string write_balance_csv(const BalanceTable& table) {
  std::ostringstream out;
  out << kCsvSchemaLine << "\n";
  out << "variable,category,k,treated_count,control_count,treated_value,"
         "control_value,std_difference\n";
  for (const auto& r : table.rows) {
    out << csv_quote(r.variable) << ',' << csv_quote(r.category) << ','
        << r.event_index << ',' << r.treated_count << ',' << r.control_count
        << ',' << format_number(r.treated_value) << ','
        << format_number(r.control_value) << ','
        << format_number(r.std_difference) << "\n";
  }
  return out.str();
}

std::string write_qq_json(
    const std::string& outcome,
    const std::vector<std::pair<double, double>>& points) {
  ordered_json j;
  j["schema"] = 1;
  j["outcome"] = outcome;
  auto& arr = j["points"] = ordered_json::array();
  for (const auto& [t, c] : points) {
    arr.push_back(ordered_json::array({t, c}));
  }
  return j.dump(2) + "\n";
}

std::string write_boxplot_json(const std::string& outcome,
                               const std::vector<BoxplotGroup>& groups) {
  ordered_json j;
  j["schema"] = 1;
  j["outcome"] = outcome;
  auto& arr = j["groups"] = ordered_json::array();
  for (const auto& g : groups) {
    ordered_json item;
    item["k"] = g.event_index;
    item["arm"] = g.arm;
    item["n"] = g.n;
    item["min"] = g.summary.min;
    item["lower_hinge"] = g.summary.lower_hinge;
    item["median"] = g.summary.median;
    item["upper_hinge"] = g.summary.upper_hinge;
    item["max"] = g.summary.max;
    arr.push_back(std::move(item));
  }
  return j.dump(2) + "\n";
}

std::string write_report_json(const SensitivityReport& report) {
  ordered_json j;
  j["schema"] = 1;
  j["model"] = report.model;
  j["outcome"] = report.outcome;
  j["direction"] = report.direction;
  j["alpha"] = report.alpha;
  auto& rows = j["rows"] = ordered_json::array();
  for (const auto& r : report.rows) {
    ordered_json item;
    item["gamma"] = r.gamma;
    item["max_pvalue"] = r.max_pvalue;
    if (std::isnan(r.ci_bound)) {
      item["ci_bound"] = nullptr;
    } else {
      item["ci_bound"] = r.ci_bound;
    }
    item["estimate_min"] = r.estimate_min;
    item["estimate_max"] = r.estimate_max;
    if (r.exact_max_pvalue) {
      item["exact_max_pvalue"] = *r.exact_max_pvalue;
    } else {
      item["exact_max_pvalue"] = nullptr;
    }
    rows.push_back(std::move(item));
  }
  auto& warn = j["warnings"] = ordered_json::array();
  for (const auto& w : report.warnings) warn.push_back(w);
  return j.dump(2) + "\n";
}

std::string write_report_csv(const SensitivityReport& report) {
  std::ostringstream out;
  out << kCsvSchemaLine << "\n";
  out << "gamma,max_pvalue,ci_bound,estimate_min,estimate_max,"
         "exact_max_pvalue\n";
  for (const auto& r : report.rows) {
    out << format_number(r.gamma) << ',' << format_number(r.max_pvalue) << ',';
    if (!std::isnan(r.ci_bound)) out << format_number(r.ci_bound);
    out << ',' << format_number(r.estimate_min) << ','
        << format_number(r.estimate_max) << ',';
    if (r.exact_max_pvalue) out << format_number(*r.exact_max_pvalue);
    out << "\n";
  }
  return out.str();
}

std::string write_truth_json(const SimTruth& truth) {
  ordered_json j;
  j["schema"] = 1;
  j["seed"] = truth.seed;
  j["gamma_true"] = truth.gamma_true;
  j["effect_model"] = truth.effect_model == EffectModel::kNone
                          ? "none"
                          : truth.effect_model == EffectModel::kTobit
                                ? "tobit"
                                : "proportional";
  j["effect_value"] = truth.effect_value;
  auto& subjects = j["subjects"] = ordered_json::object();
  for (const auto& [id, t] : truth.subjects) {
    ordered_json item;
    item["u"] = t.u;
    item["r_control"] = t.r_control;
    item["r_treated"] = t.r_treated;
    item["d_control"] = t.d_control;
    item["d_treated"] = t.d_treated;
    item["treated"] = t.treated;
    subjects[id] = std::move(item);
  }
  return j.dump(2) + "\n";
}

SimTruth read_truth_json(const std::string& text) {
  auto j = ordered_json::parse(text);
  SimTruth truth;
  truth.seed = j.at("seed").get<uint64_t>();
  truth.gamma_true = j.at("gamma_true").get<double>();
  const std::string model = j.at("effect_model").get<std::string>();
  truth.effect_model = model == "none"
                           ? EffectModel::kNone
                           : model == "tobit" ? EffectModel::kTobit
                                              : EffectModel::kProportional;
  truth.effect_value = j.at("effect_value").get<double>();
  for (const auto& [id, item] : j.at("subjects").items()) {
    SubjectTruth t;
    t.u = item.at("u").get<double>();
    t.r_control = item.at("r_control").get<double>();
    t.r_treated = item.at("r_treated").get<double>();
    t.d_control = item.at("d_control").get<int>();
    t.d_treated = item.at("d_treated").get<int>();
    t.treated = item.at("treated").get<bool>();
    truth.subjects[id] = t;
  }
  return truth;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write '" + path + "'");
  out << content;
}

}  // namespace isolate
