#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "aipw/bounds.hpp"
#include "aipw/csv.hpp"
#include "aipw/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Config validation problem; maps to exit code 2 with a key diagnostic.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_keys(const json& obj, const std::string& where,
                  const std::set<std::string>& required,
                  const std::set<std::string>& optional) {
  if (!obj.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (!required.count(key) && !optional.count(key)) {
      throw ConfigError(where + ": unknown key \"" + key + "\"");
    }
  }
  for (const auto& key : required) {
    if (!obj.contains(key)) throw ConfigError(where + ": missing required key \"" + key + "\"");
  }
}

template <typename T>
T get_as(const json& obj, const std::string& where, const std::string& key) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": key \"" + key + "\" has the wrong type");
  }
}

template <typename T>
void maybe(const json& obj, const std::string& where, const std::string& key, T& out) {
  if (obj.contains(key)) out = get_as<T>(obj, where, key);
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
}

aipw::DgpConfig parse_dgp(const json& j, const std::string& where) {
  require_keys(j, where, {}, {"p", "pi1"});
  aipw::DgpConfig cfg;
  maybe(j, where, "p", cfg.p);
  maybe(j, where, "pi1", cfg.pi1);
  return cfg;
}

aipw::LearnerSpec parse_learner(const json& j, const std::string& where) {
  require_keys(j, where, {"kind"},
               {"lambda_grid", "lambda_min_ratio", "cv_folds", "hal_max_degree",
                "hal_smoothness", "hal_knot_budget", "library", "sl_folds"});
  aipw::LearnerSpec spec;
  spec.kind = aipw::learner_kind_from_string(get_as<std::string>(j, where, "kind"));
  maybe(j, where, "lambda_grid", spec.lambda_grid);
  maybe(j, where, "lambda_min_ratio", spec.lambda_min_ratio);
  maybe(j, where, "cv_folds", spec.cv_folds);
  maybe(j, where, "hal_max_degree", spec.hal_max_degree);
  maybe(j, where, "hal_smoothness", spec.hal_smoothness);
  maybe(j, where, "hal_knot_budget", spec.hal_knot_budget);
  maybe(j, where, "sl_folds", spec.sl_folds);
  if (j.contains("library")) {
    const json& lib = j.at("library");
    if (lib.is_string()) {
      const std::string name = lib.get<std::string>();
      int knots = spec.hal_knot_budget;
      if (name == "mis") {
        spec.library = aipw::LearnerSpec::mis_library();
      } else if (name == "rich") {
        spec.library = aipw::LearnerSpec::rich_library(knots);
      } else {
        throw ConfigError(where + ": library must be \"mis\", \"rich\", or a list");
      }
    } else if (lib.is_array()) {
      for (std::size_t i = 0; i < lib.size(); ++i) {
        spec.library.push_back(
            parse_learner(lib[i], where + ".library[" + std::to_string(i) + "]"));
      }
    } else {
      throw ConfigError(where + ": key \"library\" has the wrong type");
    }
  }
  try {
    spec.validate();
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return spec;
}

aipw::EstimatorSpec parse_estimator(const json& j, const std::string& where) {
  require_keys(j, where, {"name", "kind"}, {"learner", "K", "hc"});
  aipw::EstimatorSpec spec;
  spec.name = get_as<std::string>(j, where, "name");
  spec.kind = aipw::estimator_kind_from_string(get_as<std::string>(j, where, "kind"));
  if (j.contains("K")) spec.K = get_as<std::size_t>(j, where, "K");
  if (j.contains("hc")) {
    const std::string hc = get_as<std::string>(j, where, "hc");
    if (hc == "HC0") {
      spec.hc = aipw::HcVariant::HC0;
    } else if (hc == "HC1") {
      spec.hc = aipw::HcVariant::HC1;
    } else if (hc == "HC3") {
      spec.hc = aipw::HcVariant::HC3;
    } else {
      throw ConfigError(where + ": hc must be one of HC0, HC1, HC3");
    }
  }
  if (spec.uses_learner()) {
    if (!j.contains("learner")) {
      throw ConfigError(where + ": missing required key \"learner\"");
    }
    spec.learner = parse_learner(j.at("learner"), where + ".learner");
  } else if (j.contains("learner")) {
    throw ConfigError(where + ": key \"learner\" only applies to aipw estimators");
  }
  return spec;
}

aipw::ScenarioConfig parse_scenario(const json& j, std::optional<std::uint64_t> seed_override,
                                    int threads) {
  const std::string where = "config";
  require_keys(j, where, {"n", "runs", "roster"},
               {"scenario_id", "dgp", "alpha", "base_seed", "test_set_size", "truth_mc_n"});
  aipw::ScenarioConfig cfg;
  maybe(j, where, "scenario_id", cfg.scenario_id);
  if (j.contains("dgp")) cfg.dgp = parse_dgp(j.at("dgp"), "config.dgp");
  cfg.n = get_as<std::size_t>(j, where, "n");
  cfg.runs = get_as<std::size_t>(j, where, "runs");
  maybe(j, where, "alpha", cfg.alpha);
  maybe(j, where, "base_seed", cfg.base_seed);
  maybe(j, where, "test_set_size", cfg.test_set_size);
  maybe(j, where, "truth_mc_n", cfg.truth_mc_n);
  const json& roster = j.at("roster");
  if (!roster.is_array() || roster.empty()) {
    throw ConfigError("config: key \"roster\" must be a nonempty list");
  }
  for (std::size_t i = 0; i < roster.size(); ++i) {
    cfg.roster.push_back(
        parse_estimator(roster[i], "config.roster[" + std::to_string(i) + "]"));
  }
  if (seed_override) cfg.base_seed = *seed_override;
  cfg.threads = threads;
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

aipw::BoundInputs parse_bound_inputs(const json& j, const std::string& where) {
  static const std::set<std::string> keys = {
      "n", "K", "fold_size", "tau_pi", "M", "alpha", "z_alpha", "psi_star",
      "sigma_hash", "sigma_dagger", "sigma_star", "rho_hash", "varsigma_hash",
      "varrho_hash", "m_bar", "m_underbar", "sigma_bar_sq", "rho_bar", "q", "delta",
      "delta_prime", "eqd2", "eqd1", "qdiff", "nu", "s_hat1", "s_hat2", "s_hat3",
      "s_tilde1", "s_tilde2", "subgaussian", "condition7", "condition9", "kind",
      "constant", "j_2delta", "j_2delta_prime", "j_2"};
  require_keys(j, where, {}, keys);
  aipw::BoundInputs b;
  maybe(j, where, "n", b.n);
  maybe(j, where, "K", b.K);
  maybe(j, where, "fold_size", b.fold_size);
  maybe(j, where, "tau_pi", b.tau_pi);
  maybe(j, where, "M", b.M);
  maybe(j, where, "alpha", b.alpha);
  maybe(j, where, "z_alpha", b.z_alpha);
  maybe(j, where, "psi_star", b.psi_star);
  maybe(j, where, "sigma_hash", b.sigma_hash);
  maybe(j, where, "sigma_dagger", b.sigma_dagger);
  maybe(j, where, "sigma_star", b.sigma_star);
  maybe(j, where, "rho_hash", b.rho_hash);
  maybe(j, where, "varsigma_hash", b.varsigma_hash);
  maybe(j, where, "varrho_hash", b.varrho_hash);
  maybe(j, where, "m_bar", b.m_bar);
  maybe(j, where, "m_underbar", b.m_underbar);
  maybe(j, where, "sigma_bar_sq", b.sigma_bar_sq);
  maybe(j, where, "rho_bar", b.rho_bar);
  maybe(j, where, "q", b.q);
  maybe(j, where, "delta", b.delta);
  maybe(j, where, "delta_prime", b.delta_prime);
  maybe(j, where, "eqd2", b.eqd2);
  maybe(j, where, "eqd1", b.eqd1);
  maybe(j, where, "qdiff", b.qdiff);
  maybe(j, where, "nu", b.nu);
  maybe(j, where, "s_hat1", b.s_hat1);
  maybe(j, where, "s_hat2", b.s_hat2);
  maybe(j, where, "s_hat3", b.s_hat3);
  maybe(j, where, "s_tilde1", b.s_tilde1);
  maybe(j, where, "s_tilde2", b.s_tilde2);
  maybe(j, where, "subgaussian", b.subgaussian);
  maybe(j, where, "condition7", b.condition7);
  maybe(j, where, "condition9", b.condition9);
  if (j.contains("kind")) {
    b.kind = aipw::class_kind_from_string(get_as<std::string>(j, where, "kind"));
  }
  maybe(j, where, "constant", b.constant);
  maybe(j, where, "j_2delta", b.j_2delta);
  maybe(j, where, "j_2delta_prime", b.j_2delta_prime);
  maybe(j, where, "j_2", b.j_2);
  try {
    b.validate();
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return b;
}

std::vector<std::string> bound_input_columns() {
  return {"family", "n", "K", "fold_size", "tau_pi", "M", "alpha", "z_alpha", "psi_star",
          "sigma_hash", "sigma_dagger", "sigma_star", "rho_hash", "varsigma_hash",
          "varrho_hash", "m_bar", "m_underbar", "sigma_bar_sq", "rho_bar", "q", "delta",
          "delta_prime", "eqd2", "eqd1", "qdiff", "nu", "s_hat1", "s_hat2", "s_hat3",
          "s_tilde1", "s_tilde2", "subgaussian", "condition7", "condition9", "kind",
          "constant", "j_2delta", "j_2delta_prime", "j_2"};
}

std::vector<std::string> bound_input_row(const std::string& family, const aipw::BoundInputs& b) {
  using aipw::format_double;
  return {family,
          format_double(b.n),
          format_double(b.K),
          format_double(b.fold_size),
          format_double(b.tau_pi),
          format_double(b.M),
          format_double(b.alpha),
          format_double(b.z_alpha),
          format_double(b.psi_star),
          format_double(b.sigma_hash),
          format_double(b.sigma_dagger),
          format_double(b.sigma_star),
          format_double(b.rho_hash),
          format_double(b.varsigma_hash),
          format_double(b.varrho_hash),
          format_double(b.m_bar),
          format_double(b.m_underbar),
          format_double(b.sigma_bar_sq),
          format_double(b.rho_bar),
          format_double(b.q),
          format_double(b.delta),
          format_double(b.delta_prime),
          format_double(b.eqd2),
          format_double(b.eqd1),
          format_double(b.qdiff),
          std::to_string(b.nu),
          format_double(b.s_hat1),
          format_double(b.s_hat2),
          format_double(b.s_hat3),
          format_double(b.s_tilde1),
          format_double(b.s_tilde2),
          b.subgaussian ? "1" : "0",
          b.condition7 ? "1" : "0",
          b.condition9 ? "1" : "0",
          aipw::to_string(b.kind),
          format_double(b.constant),
          format_double(b.j_2delta),
          format_double(b.j_2delta_prime),
          format_double(b.j_2)};
}

// ---- subcommand bodies ---------------------------------------------------

void cmd_truth(const json& cfg, std::optional<std::uint64_t> seed, const fs::path& out_dir) {
  require_keys(cfg, "config", {}, {"dgp", "mc_n", "seed"});
  aipw::DgpConfig dgp;
  if (cfg.contains("dgp")) dgp = parse_dgp(cfg.at("dgp"), "config.dgp");
  std::uint64_t mc_n = 100000, base = 1;
  maybe(cfg, "config", "mc_n", mc_n);
  maybe(cfg, "config", "seed", base);
  if (seed) base = *seed;
  const aipw::TruthReport t = aipw::compute_truth(dgp, mc_n, base);
  aipw::CsvTable tab;
  tab.header = {"psi1", "psi0", "ate", "sigma_star_sq", "mc_n", "ate_mc_se",
                "sigma_star_sq_mc_se"};
  tab.rows.push_back({aipw::format_double(t.psi1), aipw::format_double(t.psi0),
                      aipw::format_double(t.ate), aipw::format_double(t.sigma_star_sq),
                      std::to_string(t.mc_n), aipw::format_double(t.ate_mc_se),
                      aipw::format_double(t.sigma_star_sq_mc_se)});
  aipw::write_csv(tab, out_dir / "truth.csv");
}

void write_estimates_and_coverage(const aipw::ScenarioConfig& cfg,
                                  const aipw::ScenarioResult& res, const fs::path& out_dir) {
  using aipw::format_double;
  aipw::CsvTable est;
  est.header = {"scenario_id", "run",     "estimator", "estimand", "point", "variance_est",
                "se",          "ci_low",  "ci_high",   "covered",  "failed"};
  const auto emit = [&](const aipw::RunRecord& rec, const aipw::EstimateReport& rep) {
    est.rows.push_back({cfg.scenario_id, std::to_string(rec.run), rec.estimator,
                        aipw::to_string(rep.estimand), format_double(rep.point),
                        format_double(rep.variance_est), format_double(rep.se),
                        format_double(rep.ci_low), format_double(rep.ci_high),
                        rec.covered ? "1" : "0", rec.failed ? "1" : "0"});
  };
  for (const auto& rec : res.records) {
    if (rec.failed) {
      est.rows.push_back({cfg.scenario_id, std::to_string(rec.run), rec.estimator, "ate", "",
                          "", "", "", "", "0", "1"});
      continue;
    }
    if (rec.has_arm_means) {
      emit(rec, rec.estimates.mean1);
      emit(rec, rec.estimates.mean0);
    }
    emit(rec, rec.estimates.ate);
  }
  aipw::write_csv(est, out_dir / "estimates.csv");

  aipw::CsvTable cov;
  cov.header = {"scenario_id", "estimator", "runs", "coverage", "wilson_low", "wilson_high"};
  for (const auto& agg : res.aggregates) {
    cov.rows.push_back({cfg.scenario_id, agg.estimator, std::to_string(agg.runs),
                        format_double(agg.coverage), format_double(agg.wilson_low),
                        format_double(agg.wilson_high)});
  }
  aipw::write_csv(cov, out_dir / "coverage.csv");
}

void write_oracle_outputs(const aipw::ScenarioConfig& cfg, const aipw::ScenarioResult& res,
                          const fs::path& out_dir) {
  using aipw::format_double;
  aipw::CsvTable var;
  var.header = {"scenario_id", "estimator", "sigma_star_sq", "sigma_hash_sq", "mean_var_est",
                "mc_scaled_var"};
  for (const auto& oa : res.oracles) {
    var.rows.push_back({cfg.scenario_id, oa.estimator, format_double(oa.sigma_star_sq),
                        format_double(oa.sigma_hash_sq), format_double(oa.mean_var_est),
                        format_double(oa.mc_scaled_var)});
  }
  aipw::write_csv(var, out_dir / "variance.csv");

  aipw::CsvTable qq;
  qq.header = {"scenario_id", "estimator", "theoretical_q", "sample_q"};
  for (const auto& oa : res.oracles) {
    const aipw::EstimatorAggregate* agg = nullptr;
    for (const auto& a : res.aggregates) {
      if (a.estimator == oa.estimator) agg = &a;
    }
    if (!agg || agg->points.size() < 10) continue;
    for (const auto& [tq, sq] : aipw::qq_data(agg->points, res.truth, oa.sigma_hash_sq, cfg.n)) {
      qq.rows.push_back({cfg.scenario_id, oa.estimator, format_double(tq), format_double(sq)});
    }
  }
  aipw::write_csv(qq, out_dir / "qq.csv");
}

void cmd_identity(const aipw::ScenarioConfig& cfg, const fs::path& out_dir) {
  using aipw::format_double;
  const aipw::IdentityCheckReport rep = aipw::variance_bias_identity_check(cfg);
  aipw::CsvTable tab;
  tab.header = {"scenario_id", "arm",          "lhs",       "rhs",
                "lhs_se",      "rhs_se",       "combined_se", "z",
                "sigma_dagger_sq", "sigma_hash_sq", "e_term",  "var_fold_term"};
  for (const auto* arm : {&rep.arm1, &rep.arm0}) {
    tab.rows.push_back({cfg.scenario_id, std::to_string(arm->arm), format_double(arm->lhs),
                        format_double(arm->rhs), format_double(arm->lhs_se),
                        format_double(arm->rhs_se), format_double(arm->combined_se),
                        format_double(arm->z), format_double(arm->sigma_dagger_sq),
                        format_double(arm->sigma_hash_sq), format_double(arm->e_term),
                        format_double(arm->var_fold_term)});
  }
  aipw::write_csv(tab, out_dir / "identity.csv");
}

void cmd_bounds(const json& cfg, const fs::path& out_dir) {
  require_keys(cfg, "config", {"families", "inputs"}, {});
  const json& fams = cfg.at("families");
  const json& inputs = cfg.at("inputs");
  if (!fams.is_array() || fams.empty()) {
    throw ConfigError("config: key \"families\" must be a nonempty list");
  }
  if (!inputs.is_array() || inputs.empty()) {
    throw ConfigError("config: key \"inputs\" must be a nonempty list");
  }
  std::vector<std::string> families;
  for (const auto& f : fams) {
    const std::string name = f.get<std::string>();
    if (name != "cv" && name != "noncv" && name != "corollary_vc" &&
        name != "corollary_vc_hull") {
      throw ConfigError("config: unknown family \"" + name + "\"");
    }
    families.push_back(name);
  }
  const bool has_cv = std::count(families.begin(), families.end(), "cv") > 0;
  const bool has_noncv = std::count(families.begin(), families.end(), "noncv") > 0;
  if (has_cv && has_noncv) {
    std::cerr << "warning: cross-fit and non-cross-fit totals are each meaningful only up to "
                 "the unspecified absolute constant; comparing them numerically is not\n";
  }

  // Union of term names across all evaluations, in first-seen order.
  std::vector<std::pair<std::string, aipw::BoundReport>> evals;
  std::vector<aipw::BoundInputs> parsed;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    parsed.push_back(parse_bound_inputs(inputs[i], "config.inputs[" + std::to_string(i) + "]"));
  }
  for (const auto& fam : families) {
    for (const auto& b : parsed) {
      aipw::BoundReport rep;
      if (fam == "cv") {
        rep = aipw::cv_bound_terms(b);
      } else if (fam == "noncv") {
        rep = aipw::noncv_bound_terms(b);
      } else {
        rep = aipw::corollary_rates(
            fam == "corollary_vc" ? aipw::ClassKind::VC : aipw::ClassKind::VCHull, b, b.n);
      }
      for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
      evals.emplace_back(fam, std::move(rep));
    }
  }
  std::vector<std::string> term_cols;
  for (const auto& [fam, rep] : evals) {
    for (const auto& t : rep.terms) {
      if (std::find(term_cols.begin(), term_cols.end(), t.name) == term_cols.end()) {
        term_cols.push_back(t.name);
      }
    }
    for (const auto& t : rep.extras) {
      if (std::find(term_cols.begin(), term_cols.end(), t.name) == term_cols.end()) {
        term_cols.push_back(t.name);
      }
    }
  }

  aipw::CsvTable tab;
  tab.header = bound_input_columns();
  for (const auto& c : term_cols) tab.header.push_back(c);
  tab.header.push_back("total");
  std::size_t idx = 0;
  for (const auto& fam : families) {
    for (const auto& b : parsed) {
      const aipw::BoundReport& rep = evals[idx++].second;
      auto row = bound_input_row(fam, b);
      for (const auto& c : term_cols) {
        std::string cell;
        for (const auto& t : rep.terms) {
          if (t.name == c) cell = aipw::format_double(t.value);
        }
        for (const auto& t : rep.extras) {
          if (t.name == c) cell = aipw::format_double(t.value);
        }
        row.push_back(cell);
      }
      row.push_back(aipw::format_double(rep.total));
      tab.rows.push_back(std::move(row));
    }
  }
  aipw::write_csv(tab, out_dir / "bounds.csv");
}

void cmd_krate(const fs::path& out_dir) {
  aipw::CsvTable tab;
  tab.header = {"K", "r", "subgaussian", "factor"};
  for (const bool sub : {false, true}) {
    for (int K = 2; K <= 20; K += 2) {
      for (int ri = 4; ri <= 10; ++ri) {
        const double r = ri / 10.0;
        tab.rows.push_back({std::to_string(K), aipw::format_double(r), sub ? "1" : "0",
                            aipw::format_double(aipw::k_rate_factor(K, r, sub))});
      }
    }
  }
  aipw::write_csv(tab, out_dir / "krate.csv");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AIPW estimation, Monte Carlo coverage study, and bound calculators"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir_s = ".";
  std::optional<std::uint64_t> seed_override;
  int threads = 0;
  if (const char* env = std::getenv("AIPW_LAB_THREADS")) {
    threads = std::atoi(env);
  }

  const auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config_path, "JSON config file");
    if (needs_config) opt->required();
    sub->add_option("--out", out_dir_s, "output directory");
    sub->add_option("--seed", seed_override, "override the config seed");
    sub->add_option("--threads", threads, "worker threads (0 = logical cores)");
  };

  auto* truth = app.add_subcommand("truth", "Monte Carlo ground truth -> truth.csv");
  auto* simulate = app.add_subcommand("simulate", "coverage study -> estimates.csv, coverage.csv");
  auto* oracle = app.add_subcommand("oracle", "oracle variances -> variance.csv, qq.csv");
  auto* identity = app.add_subcommand("identity-check", "variance-bias identity -> identity.csv");
  auto* bounds = app.add_subcommand("bounds", "bound calculators -> bounds.csv");
  auto* krate = app.add_subcommand("krate", "K-rate factor grid -> krate.csv");
  add_common(truth, true);
  add_common(simulate, true);
  add_common(oracle, true);
  add_common(identity, true);
  add_common(bounds, true);
  add_common(krate, false);

  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path out_dir = out_dir_s;
    std::filesystem::create_directories(out_dir);
    if (truth->parsed()) {
      cmd_truth(load_config(config_path), seed_override, out_dir);
    } else if (simulate->parsed() || oracle->parsed()) {
      const aipw::ScenarioConfig cfg =
          parse_scenario(load_config(config_path), seed_override, threads);
      const aipw::ScenarioResult res = aipw::run_scenario(cfg);
      if (simulate->parsed()) {
        write_estimates_and_coverage(cfg, res, out_dir);
      } else {
        write_oracle_outputs(cfg, res, out_dir);
      }
    } else if (identity->parsed()) {
      aipw::ScenarioConfig cfg = parse_scenario(load_config(config_path), seed_override, threads);
      cmd_identity(cfg, out_dir);
    } else if (bounds->parsed()) {
      cmd_bounds(load_config(config_path), out_dir);
    } else if (krate->parsed()) {
      cmd_krate(out_dir);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
