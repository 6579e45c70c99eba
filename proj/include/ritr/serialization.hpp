#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "ritr/learners.hpp"
#include "ritr/simulation.hpp"

namespace ritr {

using json = nlohmann::json;

inline json to_json(const LossSpec& spec) {
  json j;
  j["kind"] = spec.name();
  if (spec.kind == LossKind::squared)
    j["param"] = nullptr;
  else if (spec.auto_param && !(spec.param > 0.0))
    j["param"] = "auto";
  else
    j["param"] = spec.param;
  if (spec.auto_param) j["auto_resolved"] = spec.param > 0.0;
  return j;
}

inline LossSpec loss_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  LossSpec spec;
  if (kind == "squared") {
    spec = LossSpec::squared();
  } else if (kind == "pinball") {
    spec = LossSpec::pinball(j.at("param").get<double>());
  } else if (kind == "huber") {
    if (j.at("param").is_string() && j.at("param").get<std::string>() == "auto")
      spec = LossSpec::huber_auto();
    else
      spec = LossSpec::huber(j.at("param").get<double>());
    if (j.contains("auto_resolved") && j["auto_resolved"].get<bool>()) spec.auto_param = true;
  } else if (kind == "eps_insensitive") {
    spec = LossSpec::eps_insensitive(j.at("param").get<double>());
  } else {
    throw schema_error("loss json: unknown kind '" + kind + "'");
  }
  spec.validate();
  return spec;
}

inline json to_json(const FeatureMap& map) {
  json j;
  switch (map.kind()) {
    case FeatureMapKind::linear_with_intercept: j["kind"] = "linear_with_intercept"; break;
    case FeatureMapKind::quadratic_interaction: j["kind"] = "quadratic_interaction"; break;
    case FeatureMapKind::custom_polynomial: j["kind"] = "custom_polynomial"; break;
  }
  j["input_dim"] = map.input_dim();
  if (map.kind() == FeatureMapKind::custom_polynomial) {
    json terms = json::array();
    for (const Monomial& t : map.terms()) {
      json factors = json::array();
      for (const auto& [var, exp] : t.factors) factors.push_back({var, exp});
      terms.push_back(factors);
    }
    j["terms"] = terms;
  } else {
    j["vars"] = map.vars();
  }
  return j;
}

inline FeatureMap feature_map_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  const int input_dim = j.at("input_dim").get<int>();
  if (kind == "linear_with_intercept")
    return FeatureMap::linear(input_dim, j.at("vars").get<std::vector<int>>());
  if (kind == "quadratic_interaction")
    return FeatureMap::quadratic_interaction(input_dim, j.at("vars").get<std::vector<int>>());
  if (kind == "custom_polynomial") {
    std::vector<Monomial> terms;
    for (const json& tj : j.at("terms")) {
      Monomial m;
      for (const json& fj : tj) m.factors.emplace_back(fj.at(0).get<int>(), fj.at(1).get<int>());
      terms.push_back(std::move(m));
    }
    // the stored list already starts with the intercept
    if (!terms.empty() && terms.front().factors.empty()) terms.erase(terms.begin());
    return FeatureMap::custom(input_dim, std::move(terms));
  }
  throw schema_error("feature map json: unknown kind '" + kind + "'");
}

inline json to_json(const ModelSpec& spec) {
  json j;
  j["baseline_map"] = to_json(spec.baseline_map);
  j["contrast_map"] = to_json(spec.contrast_map);
  j["n_treatments"] = spec.n_treatments;
  return j;
}

inline ModelSpec model_spec_from_json(const json& j) {
  ModelSpec spec;
  spec.baseline_map = feature_map_from_json(j.at("baseline_map"));
  spec.contrast_map = feature_map_from_json(j.at("contrast_map"));
  spec.n_treatments = j.at("n_treatments").get<int>();
  spec.validate();
  return spec;
}

inline json to_json(const FitDiagnostics& d) {
  json j;
  j["converged"] = d.converged;
  j["outer_rounds"] = d.outer_rounds;
  j["final_objective"] = d.final_objective;
  j["final_grad_norm"] = d.final_grad_norm;
  if (std::isfinite(d.resolved_alpha)) j["resolved_alpha"] = d.resolved_alpha;
  if (d.huber_scale_degenerate) j["huber_scale_degenerate"] = true;
  return j;
}

inline FitDiagnostics diagnostics_from_json(const json& j) {
  FitDiagnostics d;
  d.converged = j.at("converged").get<bool>();
  d.outer_rounds = j.at("outer_rounds").get<int>();
  d.final_objective = j.at("final_objective").get<double>();
  d.final_grad_norm = j.at("final_grad_norm").get<double>();
  if (j.contains("resolved_alpha")) d.resolved_alpha = j["resolved_alpha"].get<double>();
  if (j.contains("huber_scale_degenerate"))
    d.huber_scale_degenerate = j["huber_scale_degenerate"].get<bool>();
  return d;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

inline Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

/// Model document: spec, loss (with resolved threshold), coefficients and
/// diagnostics. Residuals stay in memory only. `covariates` and
/// `propensity` record how the training CSV was read so downstream commands
/// can reuse the mapping.
inline json to_json(const FittedModel& model, const std::vector<std::string>& covariates = {},
                    const json& propensity = json()) {
  json j;
  j["format"] = "ritr-model";
  j["spec"] = to_json(model.spec);
  j["loss"] = to_json(model.loss);
  j["design_kind"] =
      model.design_kind == DesignKind::treatment_centered ? "treatment_centered" : "raw_treatment";
  json betas = json::array();
  for (const auto& b : model.beta) betas.push_back(vector_to_json(b));
  j["beta"] = betas;
  j["gamma"] = vector_to_json(model.gamma);
  j["diagnostics"] = to_json(model.diagnostics);
  if (!covariates.empty()) j["covariates"] = covariates;
  if (!propensity.is_null()) j["propensity"] = propensity;
  return j;
}

/// Flat metric records {scenario, method, n, metric, value, mc_se} for a
/// batch of simulation cells; undefined metrics are omitted.
inline json metric_records(const std::vector<TableRow>& rows) {
  json out = json::array();
  for (const TableRow& row : rows) {
    const Scenario& sc = row.scenario;
    json scenario;
    scenario["family"] = detail::family_name(sc.family);
    scenario["error"] = detail::error_name(sc.error_law);
    scenario["sigma"] = detail::sigma_name(sc.sigma_kind);
    scenario["propensity"] = detail::propensity_name(sc.propensity);
    if (sc.d0 > 0.0) scenario["d0"] = sc.d0;
    auto emit = [&](const char* metric, const MetricAggregate& agg) {
      if (!agg.defined) return;
      json rec;
      rec["scenario"] = scenario;
      rec["method"] = row.cell.method;
      rec["n"] = sc.n;
      rec["metric"] = metric;
      rec["value"] = agg.mean;
      rec["mc_se"] = agg.mc_se;
      out.push_back(std::move(rec));
    };
    emit("mse", row.cell.mse);
    emit("pcd", row.cell.pcd);
    emit("delta_mu", row.cell.delta_mu);
    emit("delta_0.5", row.cell.delta_05);
    emit("delta_0.25", row.cell.delta_025);
  }
  return out;
}

inline FittedModel model_from_json(const json& j) {
  if (!j.contains("format") || j["format"].get<std::string>() != "ritr-model")
    throw schema_error("model json: not a ritr model document");
  FittedModel m;
  m.spec = model_spec_from_json(j.at("spec"));
  m.loss = loss_from_json(j.at("loss"));
  m.design_kind = j.at("design_kind").get<std::string>() == "raw_treatment"
                      ? DesignKind::raw_treatment
                      : DesignKind::treatment_centered;
  for (const json& bj : j.at("beta")) m.beta.push_back(vector_from_json(bj));
  if (static_cast<int>(m.beta.size()) != m.spec.n_treatments - 1)
    throw schema_error("model json: beta block count does not match treatment count");
  for (const auto& b : m.beta)
    if (b.size() != m.spec.contrast_map.dim())
      throw schema_error("model json: beta dimension does not match contrast map");
  m.gamma = vector_from_json(j.at("gamma"));
  if (m.gamma.size() != m.spec.baseline_map.dim())
    throw schema_error("model json: gamma dimension does not match baseline map");
  m.diagnostics = diagnostics_from_json(j.at("diagnostics"));
  return m;
}

}  // namespace ritr
