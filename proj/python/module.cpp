#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "aipw/bounds.hpp"
#include "aipw/dgp.hpp"
#include "aipw/estimators.hpp"
#include "aipw/harness.hpp"
#include "aipw/learners.hpp"
#include "aipw/stats.hpp"

namespace py = pybind11;
using namespace aipw;

namespace {

Dataset make_dataset(const Eigen::MatrixXd& x, const std::vector<int>& a,
                     const std::vector<double>& y, double pi1) {
  if (static_cast<std::size_t>(x.rows()) != a.size() || a.size() != y.size()) {
    throw std::invalid_argument("x, a, y must have matching lengths");
  }
  Dataset d;
  d.propensity = PropensitySpec(pi1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Observation v;
    v.x = x.row(i).transpose();
    v.a = a[static_cast<std::size_t>(i)];
    v.y = y[static_cast<std::size_t>(i)];
    d.observations.push_back(std::move(v));
  }
  return d;
}

py::dict report_dict(const EstimateReport& r) {
  py::dict out;
  out["estimand"] = to_string(r.estimand);
  out["point"] = r.point;
  out["variance_est"] = r.variance_est;
  out["se"] = r.se;
  out["ci_low"] = r.ci_low;
  out["ci_high"] = r.ci_high;
  return out;
}

py::dict set_dict(const EstimateSet& s) {
  py::dict out;
  out["mean1"] = report_dict(s.mean1);
  out["mean0"] = report_dict(s.mean0);
  out["ate"] = report_dict(s.ate);
  return out;
}

LearnerSpec learner_from_name(const std::string& name) {
  if (name == "sl_mis") {
    LearnerSpec sl = LearnerSpec::of(LearnerKind::super_learner);
    sl.library = LearnerSpec::mis_library();
    return sl;
  }
  if (name == "sl_rich") {
    LearnerSpec sl = LearnerSpec::of(LearnerKind::super_learner);
    sl.library = LearnerSpec::rich_library();
    return sl;
  }
  return LearnerSpec::of(learner_kind_from_string(name));
}

}  // namespace

PYBIND11_MODULE(_aipw_core, m) {
  m.doc() = "AIPW estimation, learners, and bound calculators";

  m.def("estimate_ipw",
        [](const Eigen::MatrixXd& x, const std::vector<int>& a,
           const std::vector<double>& y, double pi1, double alpha) {
          return set_dict(estimate_ipw(make_dataset(x, a, y, pi1), alpha));
        },
        py::arg("x"), py::arg("a"), py::arg("y"), py::arg("pi1") = 0.5,
        py::arg("alpha") = 0.05);

  m.def("estimate_ancova",
        [](const Eigen::MatrixXd& x, const std::vector<int>& a,
           const std::vector<double>& y, double pi1, double alpha, const std::string& hc) {
          HcVariant v = HcVariant::HC3;
          if (hc == "HC0") v = HcVariant::HC0;
          else if (hc == "HC1") v = HcVariant::HC1;
          else if (hc != "HC3") throw std::invalid_argument("hc must be HC0, HC1, or HC3");
          return report_dict(estimate_ancova(make_dataset(x, a, y, pi1), alpha, v));
        },
        py::arg("x"), py::arg("a"), py::arg("y"), py::arg("pi1") = 0.5,
        py::arg("alpha") = 0.05, py::arg("hc") = "HC3");

  m.def("estimate_aipw",
        [](const Eigen::MatrixXd& x, const std::vector<int>& a,
           const std::vector<double>& y, const std::string& learner, double pi1,
           double alpha, std::uint64_t seed) {
          const Dataset d = make_dataset(x, a, y, pi1);
          const OutcomePredictor q = fit_learner(d, learner_from_name(learner), seed);
          return set_dict(estimate_aipw(d, q, alpha));
        },
        py::arg("x"), py::arg("a"), py::arg("y"), py::arg("learner") = "ols",
        py::arg("pi1") = 0.5, py::arg("alpha") = 0.05, py::arg("seed") = 1);

  m.def("estimate_aipw_crossfit",
        [](const Eigen::MatrixXd& x, const std::vector<int>& a,
           const std::vector<double>& y, const std::string& learner, std::size_t K,
           double pi1, double alpha, std::uint64_t seed) {
          const Dataset d = make_dataset(x, a, y, pi1);
          return set_dict(
              estimate_aipw_crossfit(d, learner_from_name(learner), K, seed, alpha).estimates);
        },
        py::arg("x"), py::arg("a"), py::arg("y"), py::arg("learner") = "ols",
        py::arg("K") = 20, py::arg("pi1") = 0.5, py::arg("alpha") = 0.05,
        py::arg("seed") = 1);

  m.def("generate_dataset",
        [](std::size_t n, int p, double pi1, std::uint64_t seed) {
          DgpConfig cfg;
          cfg.p = p;
          cfg.pi1 = pi1;
          const Dataset d = generate_dataset(cfg, n, seed);
          Eigen::MatrixXd x(n, p);
          std::vector<int> a(n);
          std::vector<double> y(n);
          for (std::size_t i = 0; i < n; ++i) {
            x.row(static_cast<Eigen::Index>(i)) = d.observations[i].x.transpose();
            a[i] = d.observations[i].a;
            y[i] = d.observations[i].y;
          }
          return py::make_tuple(x, a, y);
        },
        py::arg("n"), py::arg("p") = 3, py::arg("pi1") = 0.5, py::arg("seed") = 1);

  m.def("compute_truth",
        [](std::uint64_t mc_n, int p, double pi1, std::uint64_t seed) {
          DgpConfig cfg;
          cfg.p = p;
          cfg.pi1 = pi1;
          const TruthReport t = compute_truth(cfg, mc_n, seed);
          py::dict out;
          out["psi1"] = t.psi1;
          out["psi0"] = t.psi0;
          out["ate"] = t.ate;
          out["sigma_star_sq"] = t.sigma_star_sq;
          out["ate_mc_se"] = t.ate_mc_se;
          out["sigma_star_sq_mc_se"] = t.sigma_star_sq_mc_se;
          return out;
        },
        py::arg("mc_n") = 100000, py::arg("p") = 3, py::arg("pi1") = 0.5,
        py::arg("seed") = 1);

  m.def("true_outcome_mean", &true_outcome_mean, py::arg("x"), py::arg("a"));
  m.def("noise_sd", &noise_sd, py::arg("q"));

  m.def("k_rate_factor",
        [](int K, double r, bool subgaussian, std::optional<double> n) {
          return k_rate_factor(K, r, subgaussian, n);
        },
        py::arg("K"), py::arg("r"), py::arg("subgaussian") = false,
        py::arg("n") = std::nullopt);

  m.def("entropy_integral_bound",
        [](double delta, int nu, const std::string& kind, double constant) {
          return entropy_integral_bound(delta, nu, class_kind_from_string(kind), constant);
        },
        py::arg("delta"), py::arg("nu") = 2, py::arg("kind") = "VC",
        py::arg("constant") = 1.0);

  m.def("wilson_interval",
        [](std::size_t successes, std::size_t trials, double level) {
          return wilson_interval(successes, trials, level);
        },
        py::arg("successes"), py::arg("trials"), py::arg("level") = 0.95);

  py::class_<BoundInputs>(m, "BoundInputs")
      .def(py::init<>())
      .def_readwrite("n", &BoundInputs::n)
      .def_readwrite("K", &BoundInputs::K)
      .def_readwrite("fold_size", &BoundInputs::fold_size)
      .def_readwrite("tau_pi", &BoundInputs::tau_pi)
      .def_readwrite("M", &BoundInputs::M)
      .def_readwrite("z_alpha", &BoundInputs::z_alpha)
      .def_readwrite("psi_star", &BoundInputs::psi_star)
      .def_readwrite("sigma_hash", &BoundInputs::sigma_hash)
      .def_readwrite("sigma_dagger", &BoundInputs::sigma_dagger)
      .def_readwrite("sigma_star", &BoundInputs::sigma_star)
      .def_readwrite("rho_hash", &BoundInputs::rho_hash)
      .def_readwrite("varsigma_hash", &BoundInputs::varsigma_hash)
      .def_readwrite("varrho_hash", &BoundInputs::varrho_hash)
      .def_readwrite("m_bar", &BoundInputs::m_bar)
      .def_readwrite("m_underbar", &BoundInputs::m_underbar)
      .def_readwrite("sigma_bar_sq", &BoundInputs::sigma_bar_sq)
      .def_readwrite("rho_bar", &BoundInputs::rho_bar)
      .def_readwrite("q", &BoundInputs::q)
      .def_readwrite("delta", &BoundInputs::delta)
      .def_readwrite("delta_prime", &BoundInputs::delta_prime)
      .def_readwrite("eqd2", &BoundInputs::eqd2)
      .def_readwrite("eqd1", &BoundInputs::eqd1)
      .def_readwrite("qdiff", &BoundInputs::qdiff)
      .def_readwrite("nu", &BoundInputs::nu)
      .def_readwrite("subgaussian", &BoundInputs::subgaussian)
      .def_readwrite("condition7", &BoundInputs::condition7)
      .def_readwrite("condition9", &BoundInputs::condition9)
      .def_readwrite("constant", &BoundInputs::constant)
      .def_readwrite("j_2delta", &BoundInputs::j_2delta)
      .def_readwrite("j_2delta_prime", &BoundInputs::j_2delta_prime)
      .def_readwrite("j_2", &BoundInputs::j_2);

  const auto report_to_dict = [](const BoundReport& rep) {
    py::dict out;
    py::dict terms, extras;
    for (const auto& t : rep.terms) terms[py::str(t.name)] = t.value;
    for (const auto& t : rep.extras) extras[py::str(t.name)] = t.value;
    out["terms"] = terms;
    out["extras"] = extras;
    out["total"] = rep.total;
    out["precondition_ok"] = rep.precondition_ok;
    out["warnings"] = rep.warnings;
    return out;
  };
  m.def("cv_bound_terms",
        [report_to_dict](const BoundInputs& inp) { return report_to_dict(cv_bound_terms(inp)); },
        py::arg("inputs"));
  m.def("noncv_bound_terms",
        [report_to_dict](const BoundInputs& inp) {
          return report_to_dict(noncv_bound_terms(inp));
        },
        py::arg("inputs"));
  m.def("corollary_rates",
        [report_to_dict](const std::string& kind, const BoundInputs& inp, double n) {
          return report_to_dict(corollary_rates(class_kind_from_string(kind), inp, n));
        },
        py::arg("kind"), py::arg("inputs"), py::arg("n"));
}
