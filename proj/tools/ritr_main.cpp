// ritr: robust regression for individualized treatment rules.
//
// Subcommands: fit, bootstrap, evaluate, simulate, recommend. All outputs
// are UTF-8; runs with a --seed are byte-identical across re-runs, and every
// command writes a run manifest alongside its outputs.
#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ritr/inference.hpp"
#include "ritr/serialization.hpp"
#include "ritr/simulation.hpp"
#include "ritr/value_estimation.hpp"
#include "ritr/version.hpp"

namespace {

using ritr::json;

// ---------------------------------------------------------------------------
// small helpers

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(s);
  while (std::getline(ss, cur, sep)) {
    while (!cur.empty() && cur.front() == ' ') cur.erase(cur.begin());
    while (!cur.empty() && cur.back() == ' ') cur.pop_back();
    out.push_back(cur);
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ritr::schema_error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

/// Accumulates everything that affects results, writes the manifest last.
struct ManifestWriter {
  std::string command;
  std::vector<std::string> argv_tail;
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::vector<std::string> outputs;
  std::string started;

  explicit ManifestWriter(std::string cmd) : command(std::move(cmd)), started(timestamp_utc()) {}

  void absorb(const std::string& bytes) { hash = fnv1a(bytes, hash); }
  void absorb_file(const std::string& path) {
    absorb(path);
    absorb(read_file(path));
  }

  void write(const std::string& path) const {
    json j;
    j["command"] = command;
    j["args"] = argv_tail;
    j["config_hash"] = hex64(hash);
    if (has_seed) j["seed"] = seed;
    j["version"] = ritr::kVersion;
    j["started_at"] = started;
    j["finished_at"] = timestamp_utc();
    j["outputs"] = outputs;
    std::ofstream out(path);
    if (!out) throw ritr::schema_error("cannot write manifest '" + path + "'");
    out << j.dump(2) << '\n';
  }
};

std::uint64_t seed_or_env(std::int64_t flag_value, bool flag_given) {
  if (flag_given) return static_cast<std::uint64_t>(flag_value);
  if (const char* env = std::getenv("ROBUST_ITR_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end && *end == '\0') return static_cast<std::uint64_t>(v);
    throw ritr::schema_error("ROBUST_ITR_SEED is not an integer");
  }
  return 20240801;
}

// ---------------------------------------------------------------------------
// grammars: losses, feature specs, propensity, schema

ritr::LossSpec parse_loss(const std::string& tag, const ritr::Dataset* data = nullptr) {
  const auto colon = tag.find(':');
  const std::string head = tag.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : tag.substr(colon + 1);
  auto number = [&](const std::string& what) {
    char* end = nullptr;
    const double v = std::strtod(arg.c_str(), &end);
    if (arg.empty() || end != arg.c_str() + arg.size())
      throw ritr::schema_error("loss '" + tag + "': bad " + what);
    return v;
  };
  if (head == "squared") return ritr::LossSpec::squared();
  if (head == "pinball") return ritr::LossSpec::pinball(number("tau"));
  if (head == "huber")
    return arg == "auto" ? ritr::LossSpec::huber_auto() : ritr::LossSpec::huber(number("alpha"));
  if (head == "eps") {
    if (arg == "auto") {
      if (!data) throw ritr::schema_error("eps:auto needs data");
      return ritr::LossSpec::eps_insensitive(ritr::default_eps_insensitive_width(data->y));
    }
    return ritr::LossSpec::eps_insensitive(number("epsilon"));
  }
  throw ritr::schema_error("unknown loss '" + tag +
                           "' (expected squared|pinball:t|huber:auto|huber:a|eps:e)");
}

int covariate_index(const std::string& name, const std::vector<std::string>& covariates) {
  for (std::size_t i = 0; i < covariates.size(); ++i)
    if (covariates[i] == name) return static_cast<int>(i);
  throw ritr::schema_error("unknown covariate '" + name + "' in feature spec");
}

std::vector<int> parse_var_list(const std::string& body,
                                const std::vector<std::string>& covariates) {
  std::vector<int> vars;
  if (body == "*") {
    for (std::size_t i = 0; i < covariates.size(); ++i) vars.push_back(static_cast<int>(i));
    return vars;
  }
  for (const std::string& name : split(body, ','))
    vars.push_back(covariate_index(name, covariates));
  return vars;
}

/// Feature grammar: linear(a,b,...), quad(a,b,...), poly(t1,t2,...) with
/// terms like "age", "age^2", "age*race". "*" expands to all covariates.
ritr::FeatureMap parse_feature_spec(const std::string& spec,
                                    const std::vector<std::string>& covariates) {
  const auto open = spec.find('(');
  if (open == std::string::npos || spec.back() != ')')
    throw ritr::schema_error("feature spec '" + spec + "': expected kind(...)");
  const std::string kind = spec.substr(0, open);
  const std::string body = spec.substr(open + 1, spec.size() - open - 2);
  const int p = static_cast<int>(covariates.size());
  if (kind == "linear") return ritr::FeatureMap::linear(p, parse_var_list(body, covariates));
  if (kind == "quad")
    return ritr::FeatureMap::quadratic_interaction(p, parse_var_list(body, covariates));
  if (kind == "poly") {
    std::vector<ritr::Monomial> terms;
    for (const std::string& term : split(body, ',')) {
      if (term == "1") continue;  // intercept is implicit
      ritr::Monomial m;
      for (const std::string& factor : split(term, '*')) {
        const auto caret = factor.find('^');
        const std::string name = factor.substr(0, caret);
        int exp = 1;
        if (caret != std::string::npos) exp = std::atoi(factor.c_str() + caret + 1);
        if (exp < 1) throw ritr::schema_error("feature spec: bad exponent in '" + term + "'");
        m.factors.emplace_back(covariate_index(name, covariates), exp);
      }
      terms.push_back(std::move(m));
    }
    return ritr::FeatureMap::custom(p, std::move(terms));
  }
  throw ritr::schema_error("feature spec '" + spec + "': unknown kind '" + kind + "'");
}

struct PropensityChoice {
  bool constant = true;
  double value = 0.5;
  std::vector<std::string> columns;
};

PropensityChoice parse_propensity(const std::string& s) {
  PropensityChoice out;
  const auto colon = s.find(':');
  if (colon == std::string::npos)
    throw ritr::schema_error("propensity: expected const:p or column:NAME");
  const std::string head = s.substr(0, colon);
  const std::string arg = s.substr(colon + 1);
  if (head == "const") {
    char* end = nullptr;
    out.value = std::strtod(arg.c_str(), &end);
    if (arg.empty() || end != arg.c_str() + arg.size())
      throw ritr::schema_error("propensity: bad constant '" + arg + "'");
    return out;
  }
  if (head == "column") {
    out.constant = false;
    out.columns = split(arg, ',');
    if (out.columns.empty()) throw ritr::schema_error("propensity: empty column list");
    return out;
  }
  throw ritr::schema_error("propensity: unknown mode '" + head + "'");
}

struct SchemaFlags {
  std::string outcome;
  std::string treatment;
  std::string covariates_csv;
  std::string treatment_levels_csv;
  std::string propensity = "const:0.5";
  int n_treatments = 2;

  void add_to(CLI::App* cmd, bool required) {
    auto* o = cmd->add_option("--outcome", outcome, "Outcome column name");
    auto* t = cmd->add_option("--treatment", treatment, "Treatment column name");
    auto* c =
        cmd->add_option("--covariates", covariates_csv, "Comma-separated covariate column names");
    if (required) {
      o->required();
      t->required();
      c->required();
    }
    cmd->add_option("--treatment-levels", treatment_levels_csv,
                    "Ordered treatment labels; position defines the 0..K-1 coding");
    cmd->add_option("--propensity", propensity, "const:p or column:NAME[,NAME...]");
    cmd->add_option("--n-treatments", n_treatments, "Number of treatment arms (default 2)");
  }

  bool given() const { return !outcome.empty(); }

  ritr::CsvSchema to_schema() const {
    ritr::CsvSchema s;
    s.outcome = outcome;
    s.treatment = treatment;
    s.covariates = split(covariates_csv, ',');
    if (!treatment_levels_csv.empty()) s.treatment_levels = split(treatment_levels_csv, ',');
    s.n_treatments = n_treatments;
    const PropensityChoice prop = parse_propensity(propensity);
    if (prop.constant)
      s.propensity_fill = prop.value;
    else
      s.propensity_columns = prop.columns;
    return s;
  }
};

json schema_to_json(const ritr::CsvSchema& s, const std::string& propensity_flag) {
  json j;
  j["outcome"] = s.outcome;
  j["treatment"] = s.treatment;
  j["covariates"] = s.covariates;
  if (!s.treatment_levels.empty()) j["treatment_levels"] = s.treatment_levels;
  j["n_treatments"] = s.n_treatments;
  j["propensity"] = propensity_flag;
  return j;
}

ritr::CsvSchema schema_from_json(const json& j) {
  ritr::CsvSchema s;
  s.outcome = j.at("outcome").get<std::string>();
  s.treatment = j.at("treatment").get<std::string>();
  s.covariates = j.at("covariates").get<std::vector<std::string>>();
  if (j.contains("treatment_levels"))
    s.treatment_levels = j["treatment_levels"].get<std::vector<std::string>>();
  s.n_treatments = j.at("n_treatments").get<int>();
  const PropensityChoice prop = parse_propensity(j.at("propensity").get<std::string>());
  if (prop.constant)
    s.propensity_fill = prop.value;
  else
    s.propensity_columns = prop.columns;
  return s;
}

std::string monomial_name(const ritr::Monomial& m, const std::vector<std::string>& names) {
  if (m.factors.empty()) return "intercept";
  std::string out;
  for (const auto& [var, exp] : m.factors) {
    if (!out.empty()) out += '*';
    out += var < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(var)]
                                                : "x" + std::to_string(var + 1);
    if (exp > 1) out += '^' + std::to_string(exp);
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ritr::schema_error("cannot write '" + path + "'");
  out << text;
}

std::string format_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// subcommands

struct FitArgs {
  std::string data_path;
  SchemaFlags schema;
  std::string loss = "squared";
  std::string contrast;
  std::string baseline;
  std::string out = "model.json";
  std::string report;
};

int run_fit(const FitArgs& a, ManifestWriter& manifest) {
  const ritr::CsvSchema schema = a.schema.to_schema();
  manifest.absorb_file(a.data_path);
  const ritr::Dataset data = ritr::load_csv(a.data_path, schema);

  ritr::ModelSpec spec;
  spec.contrast_map = parse_feature_spec(a.contrast, schema.covariates);
  spec.baseline_map = parse_feature_spec(a.baseline, schema.covariates);
  spec.n_treatments = schema.n_treatments;
  const ritr::LossSpec loss = parse_loss(a.loss, &data);

  const ritr::FittedModel model = ritr::fit_rr(data, spec, loss);

  json doc = ritr::to_json(model, schema.covariates);
  doc["schema"] = schema_to_json(schema, a.schema.propensity);
  write_text(a.out, doc.dump(2) + "\n");
  manifest.outputs.push_back(a.out);

  std::ostringstream rep;
  rep << "fit: loss=" << model.loss.name();
  if (model.loss.kind != ritr::LossKind::squared) rep << " param=" << format_num(model.loss.param);
  rep << " converged=" << (model.diagnostics.converged ? "yes" : "no")
      << " objective=" << format_num(model.diagnostics.final_objective) << "\n\n";
  rep << "contrast coefficients (arm k vs arm 0)\n";
  for (std::size_t k = 0; k < model.beta.size(); ++k) {
    for (Eigen::Index j = 0; j < model.beta[k].size(); ++j)
      rep << "  arm" << (k + 1) << "  "
          << monomial_name(model.spec.contrast_map.terms()[static_cast<std::size_t>(j)],
                           schema.covariates)
          << " = " << format_num(model.beta[k][j]) << "\n";
  }
  rep << "baseline coefficients\n";
  for (Eigen::Index j = 0; j < model.gamma.size(); ++j)
    rep << "  "
        << monomial_name(model.spec.baseline_map.terms()[static_cast<std::size_t>(j)],
                         schema.covariates)
        << " = " << format_num(model.gamma[j]) << "\n";
  std::cout << rep.str();
  if (!a.report.empty()) {
    write_text(a.report, rep.str());
    manifest.outputs.push_back(a.report);
  }
  return 0;
}

struct BootstrapArgs {
  std::string data_path;
  std::string model_path;
  SchemaFlags schema;
  int B = 1000;
  std::int64_t seed = 0;
  bool seed_given = false;
  int jobs = 1;
  std::string scheme = "pairs";
  std::string out = "bootstrap.csv";
};

int run_bootstrap(const BootstrapArgs& a, ManifestWriter& manifest) {
  manifest.absorb_file(a.model_path);
  manifest.absorb_file(a.data_path);
  const json doc = json::parse(read_file(a.model_path));
  const ritr::FittedModel model = ritr::model_from_json(doc);
  const ritr::CsvSchema schema =
      a.schema.given() ? a.schema.to_schema() : schema_from_json(doc.at("schema"));
  const ritr::Dataset data = ritr::load_csv(a.data_path, schema);
  if (a.B < 2) throw ritr::schema_error("--B must be at least 2");
  const std::uint64_t seed = seed_or_env(a.seed, a.seed_given);
  manifest.seed = seed;
  manifest.has_seed = true;

  ritr::BootstrapScheme scheme;
  if (a.scheme == "residual")
    scheme = ritr::BootstrapScheme::residual;
  else if (a.scheme == "pairs")
    scheme = ritr::BootstrapScheme::pairs;
  else
    throw ritr::schema_error("--scheme must be pairs or residual");
  const ritr::BootstrapResult res =
      ritr::bootstrap(data, model.spec, model.loss, {}, a.B, seed, scheme, a.jobs);

  std::ostringstream csv;
  csv << "arm,term,estimate,se,p_value\n";
  std::ostringstream table;
  table << "bootstrap (" << (scheme == ritr::BootstrapScheme::pairs ? "pairs" : "residual")
        << ", B=" << a.B << ", seed=" << seed << ")\n";
  table << "  term                 Est.        SE          PV\n";
  const Eigen::Index cd = model.spec.contrast_map.dim();
  for (Eigen::Index j = 0; j < res.estimate.size(); ++j) {
    const int arm = static_cast<int>(j / cd) + 1;
    const std::string term = monomial_name(
        model.spec.contrast_map.terms()[static_cast<std::size_t>(j % cd)], schema.covariates);
    csv << arm << ',' << term << ',' << format_num(res.estimate[j]) << ','
        << format_num(res.se[j]) << ',' << format_num(res.p_values[j]) << '\n';
    char line[160];
    std::snprintf(line, sizeof(line), "  %-18s %10.4f  %10.4f  %10.4f\n", term.c_str(),
                  res.estimate[j], res.se[j], res.p_values[j]);
    table << line;
  }
  write_text(a.out, csv.str());
  manifest.outputs.push_back(a.out);
  std::cout << table.str();
  return 0;
}

struct EvaluateArgs {
  std::string data_path;
  std::string model_path;
  SchemaFlags schema;
  std::string estimator = "both";
  std::string out = "value.csv";
};

int run_evaluate(const EvaluateArgs& a, ManifestWriter& manifest) {
  manifest.absorb_file(a.model_path);
  manifest.absorb_file(a.data_path);
  const json doc = json::parse(read_file(a.model_path));
  const ritr::FittedModel model = ritr::model_from_json(doc);
  const ritr::CsvSchema schema =
      a.schema.given() ? a.schema.to_schema() : schema_from_json(doc.at("schema"));
  const ritr::Dataset data = ritr::load_csv(a.data_path, schema);
  const ritr::TreatmentRule rule = ritr::TreatmentRule::from_model(model);

  std::ostringstream csv;
  csv << "estimator,value,se,ci_low,ci_high\n";
  auto emit = [&](const char* name, const ritr::ValueEstimate& v) {
    csv << name << ',' << format_num(v.value) << ',' << format_num(v.se) << ','
        << format_num(v.ci_low) << ',' << format_num(v.ci_high) << '\n';
    char line[160];
    std::snprintf(line, sizeof(line), "  %-6s value=%.4f se=%.4f ci=(%.4f, %.4f)\n", name, v.value,
                  v.se, v.ci_low, v.ci_high);
    std::cout << line;
  };
  if (a.estimator != "ipwe" && a.estimator != "aipwe" && a.estimator != "both")
    throw ritr::schema_error("--estimator must be ipwe, aipwe or both");
  if (a.estimator == "ipwe" || a.estimator == "both") emit("ipwe", ritr::ipwe(data, rule));
  if (a.estimator == "aipwe" || a.estimator == "both") emit("aipwe", ritr::aipwe(data, model, rule));
  write_text(a.out, csv.str());
  manifest.outputs.push_back(a.out);
  return 0;
}

struct SimulateArgs {
  std::string config_path;
  std::string out_dir = ".";
  int jobs = 0;
  std::int64_t seed = 0;
  bool seed_given = false;
};

ritr::Scenario scenario_from_json(const json& j) {
  ritr::Scenario sc;
  const std::string family = j.at("family").get<std::string>();
  if (family == "model_I")
    sc.family = ritr::TruthFamily::model_I;
  else if (family == "model_II")
    sc.family = ritr::TruthFamily::model_II;
  else if (family == "interaction")
    sc.family = ritr::TruthFamily::interaction;
  else
    throw ritr::schema_error("scenario: unknown family '" + family + "'");
  const std::string error = j.at("error").get<std::string>();
  if (error == "normal")
    sc.error_law = ritr::ErrorLaw::normal;
  else if (error == "log_normal")
    sc.error_law = ritr::ErrorLaw::log_normal;
  else if (error == "cauchy")
    sc.error_law = ritr::ErrorLaw::cauchy;
  else if (error == "gamma_centered")
    sc.error_law = ritr::ErrorLaw::gamma_centered;
  else
    throw ritr::schema_error("scenario: unknown error law '" + error + "'");
  const std::string sigma = j.at("sigma").get<std::string>();
  if (sigma == "homogeneous")
    sc.sigma_kind = ritr::SigmaKind::homogeneous;
  else if (sigma == "heterogeneous_x")
    sc.sigma_kind = ritr::SigmaKind::heterogeneous_x;
  else if (sigma == "treatment_interacted")
    sc.sigma_kind = ritr::SigmaKind::treatment_interacted;
  else
    throw ritr::schema_error("scenario: unknown sigma kind '" + sigma + "'");
  if (j.contains("propensity")) {
    const std::string prop = j["propensity"].get<std::string>();
    if (prop == "constant_half")
      sc.propensity = ritr::PropensityLaw::constant_half;
    else if (prop == "expit_diff")
      sc.propensity = ritr::PropensityLaw::expit_diff;
    else
      throw ritr::schema_error("scenario: unknown propensity law '" + prop + "'");
  }
  if (j.contains("d0")) sc.d0 = j["d0"].get<double>();
  sc.n = j.at("n").get<int>();
  if (j.contains("replications")) sc.replications = j["replications"].get<int>();
  if (j.contains("validation_size")) sc.validation_size = j["validation_size"].get<int>();
  if (j.contains("seed")) sc.seed = j["seed"].get<std::uint64_t>();
  sc.validate();
  return sc;
}

int run_simulate(const SimulateArgs& a, ManifestWriter& manifest) {
  manifest.absorb_file(a.config_path);
  const json cfg = json::parse(read_file(a.config_path));

  ritr::TableOptions opt;
  if (cfg.contains("replications")) opt.replications = cfg["replications"].get<int>();
  if (cfg.contains("validation_size")) opt.validation_size = cfg["validation_size"].get<int>();
  opt.seed =
      cfg.contains("seed") ? cfg["seed"].get<std::uint64_t>() : seed_or_env(a.seed, a.seed_given);
  manifest.seed = opt.seed;
  manifest.has_seed = true;
  if (cfg.contains("n_values")) opt.n_values = cfg["n_values"].get<std::vector<int>>();
  if (cfg.contains("methods")) {
    opt.methods.clear();
    for (const json& mj : cfg["methods"]) {
      const std::string tag = mj.get<std::string>();
      if (tag == "ls" || tag == "squared") {
        opt.methods.push_back(ritr::Method::ls());
      } else {
        const ritr::LossSpec loss = parse_loss(tag);
        std::string label = tag;
        if (loss.kind == ritr::LossKind::pinball)
          label = "P(" + std::string(tag.substr(tag.find(':') + 1)) + ")";
        if (loss.kind == ritr::LossKind::huber) label = "Huber";
        opt.methods.push_back(ritr::Method{loss, label});
      }
    }
  }
  opt.jobs = a.jobs > 0 ? a.jobs : 1;

  auto out_path = [&](const std::string& name) { return a.out_dir + "/" + name; };

  if (cfg.contains("tables"))
    for (const json& tj : cfg["tables"]) {
      const std::string table = tj.get<std::string>();
      std::ostringstream csv;
      const std::vector<ritr::TableRow> rows = ritr::run_table(table, opt, csv);
      const std::string path = out_path(table + ".csv");
      write_text(path, csv.str());
      manifest.outputs.push_back(path);
      const std::string records_path = out_path(table + ".json");
      write_text(records_path, ritr::metric_records(rows).dump(2) + "\n");
      manifest.outputs.push_back(records_path);
      // console rendering follows the familiar layout: delta_0.5 is shown
      // x10 (labeled); the CSV stores unscaled values
      const bool interaction =
          !rows.empty() && rows.front().scenario.family == ritr::TruthFamily::interaction;
      std::cout << "== " << table
                << (interaction ? "  (delta columns unscaled)"
                                : "  (delta_0.5 column is multiplied by 10)")
                << "\n";
      char line[256];
      if (interaction)
        std::cout << "  error            d0    n    method    delta_mu  delta_0.5 delta_0.25\n";
      else
        std::cout << "  sigma            error        n    method    mse(se)          pcd    "
                     "delta_0.5 x10\n";
      for (const ritr::TableRow& row : rows) {
        const ritr::Scenario& sc = row.scenario;
        const ritr::CellResult& c = row.cell;
        if (interaction) {
          std::snprintf(line, sizeof(line), "  %-15s %4.0f %5d  %-9s %9.2f %10.2f %10.2f\n",
                        ritr::detail::error_name(sc.error_law), sc.d0, sc.n, c.method.c_str(),
                        c.delta_mu.mean, c.delta_05.mean, c.delta_025.mean);
        } else {
          char mse[40];
          if (c.mse.defined)
            std::snprintf(mse, sizeof(mse), "%.2f (%.3f)", c.mse.mean, c.mse.mc_se);
          else
            std::snprintf(mse, sizeof(mse), "-");
          std::snprintf(line, sizeof(line), "  %-16s %-12s %4d  %-9s %-16s %5.1f %10.2f\n",
                        ritr::detail::sigma_name(sc.sigma_kind),
                        ritr::detail::error_name(sc.error_law), sc.n, c.method.c_str(), mse,
                        c.pcd.mean, 10.0 * c.delta_05.mean);
        }
        std::cout << line;
      }
      std::cout << "wrote " << path << "\n";
    }

  if (cfg.contains("scenarios")) {
    std::ostringstream csv;
    csv << "family,error,sigma,propensity,d0,n,method,metric,mean,mc_se,note\n";
    std::vector<ritr::TableRow> rows;
    for (const json& sj : cfg["scenarios"]) {
      ritr::Scenario sc = scenario_from_json(sj);
      if (!sj.contains("replications")) sc.replications = opt.replications;
      if (!sj.contains("validation_size")) sc.validation_size = opt.validation_size;
      if (!sj.contains("seed")) sc.seed = opt.seed;
      const auto cells = ritr::run_cell(sc, opt.methods, {}, opt.jobs);
      const bool interaction = sc.family == ritr::TruthFamily::interaction;
      for (const auto& cell : cells) {
        if (!interaction) {
          ritr::detail::emit_metric(csv, sc, cell.method, "mse", cell.mse, cell.mse_suppressed);
          ritr::detail::emit_metric(csv, sc, cell.method, "pcd", cell.pcd);
          ritr::detail::emit_metric(csv, sc, cell.method, "delta_mu", cell.delta_mu);
          ritr::detail::emit_metric(csv, sc, cell.method, "delta_0.5", cell.delta_05);
        } else {
          ritr::detail::emit_metric(csv, sc, cell.method, "delta_mu", cell.delta_mu);
          ritr::detail::emit_metric(csv, sc, cell.method, "delta_0.5", cell.delta_05);
          ritr::detail::emit_metric(csv, sc, cell.method, "delta_0.25", cell.delta_025);
        }
        rows.push_back(ritr::TableRow{sc, cell});
      }
    }
    const std::string path = out_path("scenarios.csv");
    write_text(path, csv.str());
    manifest.outputs.push_back(path);
    const std::string records_path = out_path("scenarios.json");
    write_text(records_path, ritr::metric_records(rows).dump(2) + "\n");
    manifest.outputs.push_back(records_path);
    std::cout << "wrote " << path << "\n";
  }

  if (manifest.outputs.empty())
    throw ritr::schema_error("simulate config names no tables or scenarios");
  return 0;
}

struct RecommendArgs {
  std::string model_path;
  std::string covariates_path;
  std::string out = "recommendations.csv";
};

int run_recommend(const RecommendArgs& a, ManifestWriter& manifest) {
  manifest.absorb_file(a.model_path);
  manifest.absorb_file(a.covariates_path);
  const json doc = json::parse(read_file(a.model_path));
  const ritr::FittedModel model = ritr::model_from_json(doc);
  const ritr::TreatmentRule rule = ritr::TreatmentRule::from_model(model);

  std::vector<std::string> covariates;
  if (doc.contains("covariates")) covariates = doc["covariates"].get<std::vector<std::string>>();

  std::ifstream in(a.covariates_path);
  if (!in) throw ritr::schema_error("cannot open '" + a.covariates_path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ritr::schema_error("covariate csv: missing header");
  const std::vector<std::string> header = ritr::detail::split_csv_line(line);
  const int p = model.spec.covariate_dim();
  std::vector<std::size_t> cols;
  if (!covariates.empty()) {
    for (const std::string& name : covariates) {
      const auto it = std::find(header.begin(), header.end(), name);
      if (it == header.end())
        throw ritr::schema_error("covariate csv: missing column '" + name + "'");
      cols.push_back(static_cast<std::size_t>(it - header.begin()));
    }
  } else {
    if (static_cast<int>(header.size()) < p)
      throw ritr::schema_error("covariate csv: expected at least " + std::to_string(p) +
                               " columns");
    for (int j = 0; j < p; ++j) cols.push_back(static_cast<std::size_t>(j));
  }
  if (static_cast<int>(cols.size()) != p)
    throw ritr::schema_error("covariate csv: dimension mismatch with the model");

  std::ostringstream csv;
  csv << "row,contrast,treatment\n";
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const std::vector<std::string> cells = ritr::detail::split_csv_line(line);
    if (cells.size() < header.size())
      throw ritr::schema_error("covariate csv: short row " + std::to_string(row));
    Eigen::VectorXd x(p);
    for (int j = 0; j < p; ++j)
      x[j] =
          ritr::detail::parse_number(cells[cols[static_cast<std::size_t>(j)]], "covariate", row);
    const int decision = rule.decide(x);
    // report the contrast of the chosen arm; for arm 0 report arm 1's
    // contrast so "why not treat" is visible
    const double contrast = decision >= 1 ? rule.contrast(x, decision) : rule.contrast(x, 1);
    csv << row << ',' << format_num(contrast) << ',' << decision << '\n';
  }
  if (row == 0) throw ritr::schema_error("covariate csv: no data rows");
  write_text(a.out, csv.str());
  manifest.outputs.push_back(a.out);
  std::cout << "wrote " << a.out << " (" << row << " rows)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robust regression for individualized treatment rules"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ritr::kVersion);

  FitArgs fit_args;
  CLI::App* fit = app.add_subcommand("fit", "Estimate a treatment rule from CSV data");
  fit->add_option("--data", fit_args.data_path, "Input CSV")->required();
  fit_args.schema.add_to(fit, true);
  fit->add_option("--loss", fit_args.loss, "squared|pinball:t|huber:auto|huber:a|eps:e|eps:auto");
  fit->add_option("--contrast", fit_args.contrast, "Contrast feature spec")->required();
  fit->add_option("--baseline", fit_args.baseline, "Baseline feature spec")->required();
  fit->add_option("--out", fit_args.out, "Model JSON output path");
  fit->add_option("--report", fit_args.report, "Also write the text report here");

  BootstrapArgs boot_args;
  CLI::App* boot = app.add_subcommand("bootstrap", "Bootstrap SEs and p-values for a fit");
  boot->add_option("--data", boot_args.data_path, "Input CSV")->required();
  boot->add_option("--model", boot_args.model_path, "Fitted model JSON")->required();
  boot_args.schema.add_to(boot, false);
  boot->add_option("--B", boot_args.B, "Bootstrap replicates (default 1000)");
  boot->add_option("--seed", boot_args.seed, "RNG seed");
  boot->add_option("--jobs", boot_args.jobs, "Worker threads");
  boot->add_option("--scheme", boot_args.scheme, "pairs (default) or residual");
  boot->add_option("--out", boot_args.out, "CSV output path");

  EvaluateArgs eval_args;
  CLI::App* eval = app.add_subcommand("evaluate", "IPWE/AIPWE value of a fitted rule");
  eval->add_option("--data", eval_args.data_path, "Input CSV")->required();
  eval->add_option("--model", eval_args.model_path, "Fitted model JSON")->required();
  eval_args.schema.add_to(eval, false);
  eval->add_option("--estimator", eval_args.estimator, "ipwe, aipwe or both");
  eval->add_option("--out", eval_args.out, "CSV output path");

  SimulateArgs sim_args;
  CLI::App* sim = app.add_subcommand("simulate", "Run simulation tables from a JSON config");
  sim->add_option("--config", sim_args.config_path, "JSON config")->required();
  sim->add_option("--out-dir", sim_args.out_dir, "Output directory (default .)");
  sim->add_option("--jobs", sim_args.jobs, "Worker threads");
  sim->add_option("--seed", sim_args.seed, "RNG seed fallback when the config has none");

  RecommendArgs rec_args;
  CLI::App* rec = app.add_subcommand("recommend", "Apply a fitted rule to new covariates");
  rec->add_option("--model", rec_args.model_path, "Fitted model JSON")->required();
  rec->add_option("--covariates-csv", rec_args.covariates_path, "Covariate CSV")->required();
  rec->add_option("--out", rec_args.out, "CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  boot_args.seed_given = boot->count("--seed") > 0;
  sim_args.seed_given = sim->count("--seed") > 0;

  try {
    ManifestWriter manifest(app.get_subcommands().front()->get_name());
    for (int i = 1; i < argc; ++i) {
      manifest.argv_tail.emplace_back(argv[i]);
      manifest.absorb(argv[i]);
    }
    int rc = 1;
    std::string manifest_path;
    if (fit->parsed()) {
      rc = run_fit(fit_args, manifest);
      manifest_path = fit_args.out + ".manifest.json";
    } else if (boot->parsed()) {
      rc = run_bootstrap(boot_args, manifest);
      manifest_path = boot_args.out + ".manifest.json";
    } else if (eval->parsed()) {
      rc = run_evaluate(eval_args, manifest);
      manifest_path = eval_args.out + ".manifest.json";
    } else if (sim->parsed()) {
      rc = run_simulate(sim_args, manifest);
      manifest_path = sim_args.out_dir + "/manifest.json";
    } else if (rec->parsed()) {
      rc = run_recommend(rec_args, manifest);
      manifest_path = rec_args.out + ".manifest.json";
    }
    if (rc == 0) manifest.write(manifest_path);
    return rc;
  } catch (const ritr::schema_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ritr::singular_design_error& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 3;
  } catch (const ritr::divergence_error& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 3;
  } catch (const ritr::undefined_estimate_error& e) {
    std::cerr << "estimator error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
