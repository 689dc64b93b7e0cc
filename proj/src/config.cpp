#include "balpol/config.hpp"

#include <fstream>
#include <set>

#include "balpol/errors.hpp"

namespace balpol {

using nlohmann::json;

namespace {

void allow_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw UsageError(where + ": expected an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw UsageError(where + ": unknown key '" + k + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError(where + ": key '" + key + "' has the wrong type");
  }
}

json arm_by_short(const DgpATable::ArmByShort& v) { return json::array({{v[0][0], v[0][1]}, {v[1][0], v[1][1]}}); }

}  // namespace

json to_json(const learners::LearnerSpec& s) {
  return {{"kind", learners::to_string(s.kind)},
          {"l2", s.l2},
          {"hidden", s.hidden},
          {"step", s.step},
          {"iterations", s.iterations},
          {"seed", s.seed},
          {"standardize", s.standardize},
          {"clip", s.clip},
          {"max_weight", std::isfinite(s.max_weight) ? json(s.max_weight) : json(nullptr)}};
}

learners::LearnerSpec learner_spec_from_json(const json& j, learners::LearnerSpec base) {
  const std::string where = "learner";
  allow_keys(j, {"kind", "l2", "hidden", "step", "iterations", "seed", "standardize", "clip",
                 "max_weight"},
             where);
  if (j.contains("kind")) {
    std::string kind;
    read(j, "kind", kind, where);
    const auto k = learners::kind_from_string(kind);
    if (k != base.kind) {
      base = k == learners::Kind::ridge      ? learners::LearnerSpec::ridge()
             : k == learners::Kind::logistic ? learners::LearnerSpec::logistic()
                                             : learners::LearnerSpec::mlp();
    }
  }
  read(j, "l2", base.l2, where);
  read(j, "hidden", base.hidden, where);
  read(j, "step", base.step, where);
  read(j, "iterations", base.iterations, where);
  read(j, "seed", base.seed, where);
  read(j, "standardize", base.standardize, where);
  read(j, "clip", base.clip, where);
  if (j.contains("max_weight") && !j.at("max_weight").is_null()) read(j, "max_weight", base.max_weight, where);
  base.validate();
  return base;
}

json to_json(const NuisanceSpecs& s) {
  return {{"propensity", to_json(s.propensity)},
          {"selection", to_json(s.selection)},
          {"short_outcome", to_json(s.short_outcome)},
          {"long_outcome", to_json(s.long_outcome)},
          {"long_given_short", to_json(s.long_given_short)}};
}

NuisanceSpecs nuisance_specs_from_json(const json& j, NuisanceSpecs base) {
  allow_keys(j, {"propensity", "selection", "short_outcome", "long_outcome", "long_given_short"},
             "learners");
  if (j.contains("propensity")) base.propensity = learner_spec_from_json(j["propensity"], base.propensity);
  if (j.contains("selection")) base.selection = learner_spec_from_json(j["selection"], base.selection);
  if (j.contains("short_outcome"))
    base.short_outcome = learner_spec_from_json(j["short_outcome"], base.short_outcome);
  if (j.contains("long_outcome"))
    base.long_outcome = learner_spec_from_json(j["long_outcome"], base.long_outcome);
  if (j.contains("long_given_short"))
    base.long_given_short = learner_spec_from_json(j["long_given_short"], base.long_given_short);
  return base;
}

json to_json(const LearnOptions& o) {
  return {{"step", o.step},   {"iterations", o.iterations}, {"beta1", o.beta1},
          {"beta2", o.beta2}, {"epsilon", o.epsilon},       {"init_scale", o.init_scale},
          {"seed", o.seed},   {"standardize", o.standardize}};
}

LearnOptions learn_options_from_json(const json& j, LearnOptions base) {
  const std::string where = "optimizer";
  allow_keys(j, {"step", "iterations", "beta1", "beta2", "epsilon", "init_scale", "seed", "standardize"},
             where);
  read(j, "step", base.step, where);
  read(j, "iterations", base.iterations, where);
  read(j, "beta1", base.beta1, where);
  read(j, "beta2", base.beta2, where);
  read(j, "epsilon", base.epsilon, where);
  read(j, "init_scale", base.init_scale, where);
  read(j, "seed", base.seed, where);
  read(j, "standardize", base.standardize, where);
  base.validate();
  return base;
}

json to_json(const DgpATable& t) {
  json j;
  j["dim"] = t.dim;
  j["p_x"] = t.p_x;
  j["propensity"] = t.propensity;
  j["p_short"] = json::array();
  j["p_observe"] = json::array();
  j["p_long"] = json::array();
  for (std::size_t x = 0; x < t.p_x.size(); ++x) {
    j["p_short"].push_back({t.p_short[x][0], t.p_short[x][1]});
    j["p_observe"].push_back(arm_by_short(t.p_observe[x]));
    j["p_long"].push_back(arm_by_short(t.p_long[x]));
  }
  return j;
}

DgpATable dgp_table_from_json(const json& j) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "canonical") return DgpATable::canonical();
    if (name == "mixed_effects") return DgpATable::mixed_effects();
    throw UsageError("unknown DGP-A table '" + name + "' (expected canonical or mixed_effects)");
  }
  const std::string where = "table";
  allow_keys(j, {"dim", "p_x", "propensity", "p_short", "p_observe", "p_long"}, where);
  DgpATable t;
  read(j, "dim", t.dim, where);
  read(j, "p_x", t.p_x, where);
  read(j, "propensity", t.propensity, where);
  read(j, "p_short", t.p_short, where);
  read(j, "p_observe", t.p_observe, where);
  read(j, "p_long", t.p_long, where);
  t.validate();
  return t;
}

json to_json(const DgpSpec& s) {
  json j{{"family", to_string(s.family)},
         {"n", s.n},
         {"p", s.p},
         {"short_mean", s.short_mean},
         {"short_sd", s.short_sd},
         {"time_steps", s.time_steps},
         {"scale", s.scale},
         {"correlated", s.correlated},
         {"cost", s.cost},
         {"seed", s.seed},
         {"resample_covariates", s.resample_covariates}};
  if (!s.covariate_csv.empty()) j["covariate_csv"] = s.covariate_csv.string();
  if (s.table) j["table"] = to_json(*s.table);
  return j;
}

DgpSpec dgp_spec_from_json(const json& j) {
  const std::string where = "dgp";
  allow_keys(j, {"family", "n", "p", "covariate_csv", "resample_covariates", "short_mean", "short_sd",
                 "time_steps", "scale", "correlated", "cost", "seed", "table"},
             where);
  std::string family = "dgp_a";
  read(j, "family", family, where);
  DgpSpec s;
  switch (family_from_string(family)) {
    case Family::ihdp_like: s = DgpSpec::ihdp_like(1000); break;
    case Family::jobs_like: s = DgpSpec::jobs_like(1000); break;
    case Family::dgp_a: s = DgpSpec::dgp_a(DgpATable::canonical(), 1000); break;
  }
  read(j, "n", s.n, where);
  read(j, "p", s.p, where);
  std::string csv;
  read(j, "covariate_csv", csv, where);
  s.covariate_csv = csv;
  read(j, "resample_covariates", s.resample_covariates, where);
  read(j, "short_mean", s.short_mean, where);
  read(j, "short_sd", s.short_sd, where);
  read(j, "time_steps", s.time_steps, where);
  read(j, "scale", s.scale, where);
  read(j, "correlated", s.correlated, where);
  read(j, "cost", s.cost, where);
  read(j, "seed", s.seed, where);
  if (j.contains("table")) s.table = dgp_table_from_json(j["table"]);
  s.validate();
  return s;
}

json to_json(const RewardEstimate& e) {
  return {{"value", e.value},       {"std_error", e.std_error()}, {"ci_low", e.ci_low()},
          {"ci_high", e.ci_high()}, {"n", e.n},                   {"method", to_string(e.method)},
          {"which", e.which},       {"lambda", e.lambda}};
}

json to_json(const PolicyMetrics& m) {
  return {{"reward_short", m.reward_short},
          {"reward_long", m.reward_long},
          {"reward_balanced", m.reward_balanced},
          {"dW_short", m.dW_short},
          {"dW_long", m.dW_long},
          {"dW_balanced", m.dW_balanced},
          {"policy_error", m.policy_error},
          {"policy_error_short", m.policy_error_short},
          {"policy_error_long", m.policy_error_long}};
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

}  // namespace balpol
