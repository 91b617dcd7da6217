#include "srcfda/io_json.hpp"

#include "srcfda/errors.hpp"

#include <cmath>
#include <set>

namespace srcfda {

namespace {

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json vec(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index j = 0; j < v.size(); ++j) a.push_back(number(v[j]));
  return a;
}

Json mat(const Eigen::MatrixXd& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vec(m.row(r).transpose()));
  return a;
}

Eigen::VectorXd to_vec(const Json& j) {
  if (!j.is_array()) throw ConfigError("expected a numeric array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

Eigen::MatrixXd to_mat(const Json& j) {
  if (!j.is_array() || j.empty()) throw ConfigError("expected a non-empty matrix");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols) throw ConfigError("ragged matrix");
    m.row(r) = to_vec(j[r]).transpose();
  }
  return m;
}

std::pair<double, double> bounds(const Json& j) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("bounds must be [lower, upper]");
  return {j[0].get<double>(), j[1].get<double>()};
}

template <class F>
void each_key(const Json& j, const char* what, F&& f) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!f(it.key(), it.value()))
      throw ConfigError(std::string("unknown ") + what + " config key '" + it.key() + "'");
}

}  // namespace

Json to_json(const FitResult& fit) {
  const auto& p = fit.params;
  Json params;
  params["K"] = p.K;
  params["sigma2"] = p.sigma2;
  if (p.rho_s)
    params["rho_s"] = {{"scale", p.rho_s->scale},
                       {"range", p.rho_s->range},
                       {"smoothness", p.rho_s->smoothness}};
  else
    params["rho_s"] = nullptr;
  if (const auto* b = std::get_if<BrownianKernel>(&p.rho_h))
    params["rho_h"] = {{"kind", b->kind == BrownianKind::bridge ? "brownian_bridge" : "brownian_motion"},
                       {"scale", b->scale}};
  else
    params["rho_h"] = {{"kind", "unstructured"},
                       {"matrix", mat(std::get<UnstructuredCov>(p.rho_h).matrix)}};
  params["basis"] = {{"degree", p.basis.degree()}, {"interior_knots", p.basis.interior_knots()}};
  Json coef = Json::array();
  for (const auto& c : p.coef) coef.push_back(mat(c));
  params["coef"] = coef;
  params["warp_anchors"] = vec(p.warps.anchors);
  Json fixed = Json::array(), random = Json::array();
  for (std::size_t k = 0; k < p.warps.fixed.size(); ++k) {
    fixed.push_back(vec(p.warps.fixed[k]));
    Json rk = Json::array();
    for (const auto& r : p.warps.random[k]) rk.push_back(vec(r));
    random.push_back(rk);
  }
  params["fixed_warps"] = fixed;
  params["random_warps"] = random;
  params["allocation"] = p.allocation == AllocationKind::covariates ? "covariates" : "proportions";
  params["beta"] = mat(p.beta);
  params["proportions"] = vec(p.proportions);

  Json j;
  j["method"] = fit.method;
  j["K"] = p.K;
  j["curve_ids"] = fit.curve_ids;
  j["assignments"] = fit.assignments;
  j["responsibilities"] = mat(fit.responsibilities.M);
  j["priors"] = mat(fit.priors);
  j["loglik"] = number(fit.loglik);
  j["loglik_trace"] = Json::array();
  for (double v : fit.loglik_trace) j["loglik_trace"].push_back(number(v));
  j["aicc"] = number(fit.aicc);
  j["num_params"] = fit.num_params;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["ascent_violations"] = fit.ascent_violations;
  j["warnings"] = fit.warnings;
  j["params"] = params;
  return j;
}

Json to_json(const HardClustering& h, const std::string& method,
             const std::vector<std::string>& curve_ids, int K) {
  Json j;
  j["method"] = method;
  j["K"] = K;
  j["curve_ids"] = curve_ids;
  j["assignments"] = h.assignments;
  j["objective"] = number(h.objective);
  j["objective_trace"] = Json::array();
  for (double v : h.objective_trace) j["objective_trace"].push_back(number(v));
  j["iterations"] = h.iterations;
  j["converged"] = h.converged;
  j["empty_clusters"] = h.empty_clusters;
  j["warnings"] = h.warnings;
  return j;
}

Json to_json(const Selection& s) {
  Json j;
  j["best_K"] = s.best_K;
  j["rows"] = Json::array();
  for (const auto& r : s.rows) {
    Json row;
    row["K"] = r.K;
    row["ok"] = r.ok;
    row["aicc"] = r.ok ? number(r.aicc) : Json(nullptr);
    row["loglik"] = r.ok ? number(r.loglik) : Json(nullptr);
    row["num_params"] = r.num_params;
    row["error"] = r.error;
    j["rows"].push_back(row);
  }
  return j;
}

Json to_json(const EmConfig& c) {
  Json j;
  j["K"] = c.K;
  j["max_outer_iter"] = c.max_outer_iter;
  j["inner_repeats"] = c.inner_repeats;
  j["tol_rel_loglik"] = c.tol_rel_loglik;
  j["eta"] = c.eta;
  j["seed"] = c.seed;
  j["n_starts"] = c.n_starts;
  j["knots"] = c.knots;
  j["degree"] = c.degree;
  j["warp_anchors"] = vec(c.warp_anchors);
  j["estimate_fixed_warps"] = c.estimate_fixed_warps;
  j["estimate_random_warps"] = c.estimate_random_warps;
  j["warp_bound"] = c.warp_bound;
  j["warp_optimizer"] = c.warp_optimizer == WarpOptimizer::gauss_newton ? "gauss_newton" : "nelder_mead";
  j["warp_iterations"] = c.warp_iterations;
  j["warp_sweeps"] = c.warp_sweeps;
  j["max_warp_evals"] = c.max_warp_evals;
  j["amplitude_effect"] = c.amplitude_effect;
  j["rho_s"] = {{"scale", c.rho_s_init.scale},
                {"range", c.rho_s_init.range},
                {"smoothness", c.rho_s_init.smoothness}};
  j["estimate_smoothness"] = c.estimate_smoothness;
  j["rho_h"] = {{"scale", c.rho_h_init.scale},
                {"kind", c.rho_h_init.kind == BrownianKind::bridge ? "bridge" : "motion"}};
  if (c.unstructured_h) j["unstructured_h"] = mat(*c.unstructured_h);
  j["estimate_variances"] = c.estimate_variances;
  j["max_variance_evals"] = c.max_variance_evals;
  j["sigma2_bounds"] = {c.sigma2_min, c.sigma2_max};
  j["kernel_bounds"] = {c.kernel_min, c.kernel_max};
  j["smoothness_bounds"] = {c.smoothness_min, c.smoothness_max};
  j["beta_bound"] = c.beta_bound;
  j["irls_max_iter"] = c.irls_max_iter;
  j["count_random_warps"] = c.count_random_warps;
  j["aicc_sample_size"] = c.aicc_sample_size == AiccSampleSize::observations ? "observations" : "subjects";
  j["ascent_slack"] = c.ascent_slack;
  return j;
}

void apply_json(const Json& j, EmConfig& c) {
  try {
    each_key(j, "EM", [&](const std::string& k, const Json& v) {
      if (k == "K") c.K = v.get<int>();
      else if (k == "max_outer_iter") c.max_outer_iter = v.get<int>();
      else if (k == "inner_repeats") c.inner_repeats = v.get<int>();
      else if (k == "tol_rel_loglik") c.tol_rel_loglik = v.get<double>();
      else if (k == "eta") c.eta = v.get<double>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "n_starts") c.n_starts = v.get<int>();
      else if (k == "knots") c.knots = v.get<int>();
      else if (k == "degree") c.degree = v.get<int>();
      else if (k == "warp_anchors") c.warp_anchors = to_vec(v);
      else if (k == "estimate_fixed_warps") c.estimate_fixed_warps = v.get<bool>();
      else if (k == "estimate_random_warps") c.estimate_random_warps = v.get<bool>();
      else if (k == "warp_bound") c.warp_bound = v.get<double>();
      else if (k == "warp_optimizer") {
        const auto s = v.get<std::string>();
        if (s == "gauss_newton") c.warp_optimizer = WarpOptimizer::gauss_newton;
        else if (s == "nelder_mead") c.warp_optimizer = WarpOptimizer::nelder_mead;
        else throw ConfigError("warp_optimizer must be gauss_newton or nelder_mead");
      } else if (k == "warp_iterations") c.warp_iterations = v.get<int>();
      else if (k == "warp_sweeps") c.warp_sweeps = v.get<int>();
      else if (k == "max_warp_evals") c.max_warp_evals = v.get<int>();
      else if (k == "amplitude_effect") c.amplitude_effect = v.get<bool>();
      else if (k == "rho_s") {
        if (v.contains("scale")) c.rho_s_init.scale = v["scale"].get<double>();
        if (v.contains("range")) c.rho_s_init.range = v["range"].get<double>();
        if (v.contains("smoothness")) c.rho_s_init.smoothness = v["smoothness"].get<double>();
      } else if (k == "estimate_smoothness") c.estimate_smoothness = v.get<bool>();
      else if (k == "rho_h") {
        if (v.contains("scale")) c.rho_h_init.scale = v["scale"].get<double>();
        if (v.contains("kind")) {
          const auto s = v["kind"].get<std::string>();
          if (s == "bridge") c.rho_h_init.kind = BrownianKind::bridge;
          else if (s == "motion") c.rho_h_init.kind = BrownianKind::motion;
          else throw ConfigError("rho_h kind must be bridge or motion");
        }
      } else if (k == "unstructured_h") {
        if (v.is_null()) c.unstructured_h.reset();
        else c.unstructured_h = to_mat(v);
      } else if (k == "estimate_variances") c.estimate_variances = v.get<bool>();
      else if (k == "max_variance_evals") c.max_variance_evals = v.get<int>();
      else if (k == "sigma2_bounds") std::tie(c.sigma2_min, c.sigma2_max) = bounds(v);
      else if (k == "kernel_bounds") std::tie(c.kernel_min, c.kernel_max) = bounds(v);
      else if (k == "smoothness_bounds") std::tie(c.smoothness_min, c.smoothness_max) = bounds(v);
      else if (k == "beta_bound") c.beta_bound = v.get<double>();
      else if (k == "irls_max_iter") c.irls_max_iter = v.get<int>();
      else if (k == "count_random_warps") c.count_random_warps = v.get<bool>();
      else if (k == "aicc_sample_size") {
        const auto s = v.get<std::string>();
        if (s == "observations") c.aicc_sample_size = AiccSampleSize::observations;
        else if (s == "subjects") c.aicc_sample_size = AiccSampleSize::subjects;
        else throw ConfigError("aicc_sample_size must be observations or subjects");
      } else if (k == "ascent_slack") c.ascent_slack = v.get<double>();
      else return false;
      return true;
    });
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad EM config value: ") + e.what());
  }
}

void apply_json(const Json& j, KmeansFConfig& c) {
  try {
    each_key(j, "k-means-f", [&](const std::string& k, const Json& v) {
      if (k == "K") c.K = v.get<int>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "max_iter") c.max_iter = v.get<int>();
      else if (k == "refits") c.refits = v.get<int>();
      else if (k == "estimate_warps") c.estimate_warps = v.get<bool>();
      else if (k == "warp_penalty") c.warp_penalty = v.get<double>();
      else if (k == "warp_bound") c.warp_bound = v.get<double>();
      else if (k == "warp_anchors") c.warp_anchors = to_vec(v);
      else if (k == "knots") c.knots = v.get<int>();
      else if (k == "degree") c.degree = v.get<int>();
      else if (k == "eta") c.eta = v.get<double>();
      else return false;
      return true;
    });
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad k-means-f config value: ") + e.what());
  }
}

void apply_json(const Json& j, KmeansSConfig& c) {
  try {
    each_key(j, "k-means-s", [&](const std::string& k, const Json& v) {
      if (k == "K") c.K = v.get<int>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "n_init") c.n_init = v.get<int>();
      else if (k == "max_iter") c.max_iter = v.get<int>();
      else return false;
      return true;
    });
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad k-means-s config value: ") + e.what());
  }
}

// ---------------------------------------------------------------- schema check

namespace {

bool type_matches(const Json& v, const std::string& type) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "null") return v.is_null();
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  return false;
}

}  // namespace

std::vector<std::string> schema_errors(const Json& value, const Json& schema,
                                       const std::string& path) {
  std::vector<std::string> errs;
  if (schema.contains("type")) {
    const Json& t = schema["type"];
    bool ok = false;
    if (t.is_array()) {
      for (const auto& x : t) ok = ok || type_matches(value, x.get<std::string>());
    } else {
      ok = type_matches(value, t.get<std::string>());
    }
    if (!ok) {
      errs.push_back(path + ": expected type " + t.dump());
      return errs;
    }
  }
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& e : schema["enum"]) found = found || e == value;
    if (!found) errs.push_back(path + ": value not in enum");
  }
  if (schema.contains("minimum") && value.is_number() &&
      value.get<double>() < schema["minimum"].get<double>())
    errs.push_back(path + ": below minimum");
  if (value.is_object()) {
    if (schema.contains("required"))
      for (const auto& r : schema["required"])
        if (!value.contains(r.get<std::string>()))
          errs.push_back(path + ": missing required key '" + r.get<std::string>() + "'");
    if (schema.contains("properties")) {
      const Json& props = schema["properties"];
      for (auto it = value.begin(); it != value.end(); ++it) {
        if (props.contains(it.key())) {
          auto sub = schema_errors(it.value(), props[it.key()], path + "." + it.key());
          errs.insert(errs.end(), sub.begin(), sub.end());
        } else if (schema.contains("additionalProperties") &&
                   schema["additionalProperties"] == false) {
          errs.push_back(path + ": unexpected key '" + it.key() + "'");
        }
      }
    }
  }
  if (value.is_array() && schema.contains("items")) {
    for (std::size_t i = 0; i < value.size(); ++i) {
      auto sub = schema_errors(value[i], schema["items"], path + "[" + std::to_string(i) + "]");
      errs.insert(errs.end(), sub.begin(), sub.end());
    }
  }
  return errs;
}

}  // namespace srcfda
