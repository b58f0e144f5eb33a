#include "aipw/learners.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <unordered_set>

#include "aipw/rng.hpp"

namespace aipw {

namespace {

constexpr double kRidge = 1e-8;
constexpr double kCdTol = 1e-7;
constexpr int kMaxSweeps = 100000;

VectorXd outcomes(const Dataset& data) {
  VectorXd y(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) y[i] = data.observations[i].y;
  return y;
}

// Columns [A, X] with no intercept; the intercept is handled separately.
MatrixXd ax_design(const Dataset& data) {
  const std::size_t n = data.n();
  const std::size_t p = data.dim();
  MatrixXd X(n, p + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const Observation& v = data.observations[i];
    X(i, 0) = v.a;
    for (std::size_t j = 0; j < p; ++j) X(i, j + 1) = v.x[j];
  }
  return X;
}

// Row of ax_design for a query point.
VectorXd ax_row(const VectorXd& x, int a) {
  VectorXd r(x.size() + 1);
  r[0] = a;
  r.tail(x.size()) = x;
  return r;
}

// Pairwise products of the [A, X] columns (i < j), appended after them.
void append_interactions(VectorXd& row) {
  const Eigen::Index base = row.size();
  VectorXd full(base + base * (base - 1) / 2);
  full.head(base) = row;
  Eigen::Index k = base;
  for (Eigen::Index i = 0; i < base; ++i) {
    for (Eigen::Index j = i + 1; j < base; ++j) full[k++] = row[i] * row[j];
  }
  row.swap(full);
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(idx[i - 1], idx[rng.below(i)]);
  }
  return idx;
}

// Contiguous chunks of a shuffled permutation; sizes differ by at most one.
std::vector<std::vector<std::size_t>> cv_folds(std::size_t n, std::size_t k,
                                               std::uint64_t seed) {
  auto idx = shuffled_indices(n, seed);
  std::vector<std::vector<std::size_t>> folds(k);
  const std::size_t base = n / k, extra = n % k;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t sz = base + (f < extra ? 1 : 0);
    folds[f].assign(idx.begin() + pos, idx.begin() + pos + sz);
    pos += sz;
  }
  return folds;
}

struct Standardized {
  MatrixXd X;       // standardized columns (constant columns zeroed)
  VectorXd y;       // centered outcome
  VectorXd mu;      // column means
  VectorXd sigma;   // column sds (0 for constant columns)
  double y_mean = 0.0;
};

Standardized standardize(const MatrixXd& X, const VectorXd& y) {
  Standardized s;
  const double n = static_cast<double>(X.rows());
  s.mu = X.colwise().mean();
  s.X = X.rowwise() - s.mu.transpose();
  s.sigma = (s.X.colwise().squaredNorm() / n).cwiseSqrt();
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (s.sigma[j] > 0.0) {
      s.X.col(j) /= s.sigma[j];
    } else {
      s.X.col(j).setZero();
    }
  }
  s.y_mean = y.mean();
  s.y = y.array() - s.y_mean;
  return s;
}

// Coordinate-descent lasso on pre-standardized columns, objective
// (1/2n) ||y - X b||^2 + lambda ||b||_1, warm-startable along a
// descending lambda path.
class LassoSolver {
 public:
  LassoSolver(const MatrixXd& X, const VectorXd& y)
      : n_(static_cast<double>(X.rows())),
        gram_(X.transpose() * X / static_cast<double>(X.rows())),
        xty_(X.transpose() * y / static_cast<double>(X.rows())),
        yty_(y.squaredNorm() / static_cast<double>(X.rows())),
        beta_(VectorXd::Zero(X.cols())),
        grad_(xty_) {}

  void fit(double lambda) {
    // Sweep the active set to convergence, then scan all columns for KKT
    // violations; repeat until no column wants to enter.
    for (int guard = 0; guard < 100; ++guard) {
      sweep_active(lambda);
      if (!activate_violators(lambda)) break;
    }
  }

  const VectorXd& beta() const { return beta_; }

  VectorXd gradients() const { return -grad_; }  // -X'(y - X beta)/n

  // True once the fit is effectively saturated (in-sample deviance ratio near
  // 1 or support near the row count); smaller lambdas cannot improve the CV
  // criterion, so the path loop freezes there.
  bool saturated(Eigen::Index rows) const {
    Eigen::Index nz = 0;
    for (Eigen::Index j = 0; j < beta_.size(); ++j) nz += beta_[j] != 0.0;
    if (nz >= rows - rows / 10) return true;
    if (yty_ <= 0.0) return true;
    double quad = yty_;
    for (std::size_t idx = 0; idx < active_.size(); ++idx) {
      const Eigen::Index j = active_[idx];
      quad -= beta_[j] * (xty_[j] + grad_[j]);
    }
    return quad < 1e-3 * yty_;
  }

 private:
  // grad_ holds X'(y - X beta)/n throughout; updating one coefficient is a
  // rank-1 update against the cached Gram matrix.
  void sweep_active(double lambda) {
    int since_accel = 0;
    int accel_interval = 3;
    for (int it = 0; it < kMaxSweeps; ++it) {
      double max_change = 0.0;
      for (std::size_t idx = 0; idx < active_.size(); ++idx) {
        const Eigen::Index j = active_[idx];
        const double z = beta_[j] + grad_[j];
        const double nb = soft(z, lambda);
        const double d = nb - beta_[j];
        if (d != 0.0) {
          grad_ -= gram_.col(j) * d;
          beta_[j] = nb;
          max_change = std::max(max_change, std::abs(d));
        }
      }
      if (max_change < kCdTol) break;
      // On designs with near-duplicate columns the minimizer lies on a flat
      // valley: coefficients keep trading mass between correlated columns by
      // more than the max-change tolerance even though the fit is converged.
      // The stationarity residual is well defined there, so accept it as an
      // alternative stopping criterion at the same tolerance.
      if (kkt_residual(lambda) < kCdTol) break;
      // Coordinate descent crawls on strongly correlated columns; every few
      // stalled sweeps, jump to the exact minimizer on the current support
      // (kept only if it lowers the objective, so the convergence criterion
      // above remains authoritative).
      if (++since_accel >= accel_interval) {
        since_accel = 0;
        if (!support_newton_step(lambda)) {
          accel_interval = std::min(accel_interval * 2, 1024);
        }
      }
    }
  }

  double kkt_residual(double lambda) const {
    double v = 0.0;
    for (Eigen::Index j = 0; j < grad_.size(); ++j) {
      if (beta_[j] != 0.0) {
        v = std::max(v, std::abs(grad_[j] - lambda * (beta_[j] > 0.0 ? 1.0 : -1.0)));
      } else {
        v = std::max(v, std::abs(grad_[j]) - lambda);
      }
    }
    return v;
  }

  bool activate_violators(double lambda) {
    bool any = false;
    for (Eigen::Index j = 0; j < grad_.size(); ++j) {
      if (beta_[j] == 0.0 && !in_active_[j] && std::abs(grad_[j]) > lambda + 1e-12) {
        active_.push_back(j);
        in_active_[j] = true;
        any = true;
      }
    }
    return any;
  }

  double objective(double lambda) const {
    // (1/2n)||y - X beta||^2 + lambda ||beta||_1, via the cached moments:
    // ||y - X beta||^2 / n = yty - beta'(xty + grad).
    double quad = yty_;
    double l1 = 0.0;
    for (std::size_t idx = 0; idx < active_.size(); ++idx) {
      const Eigen::Index j = active_[idx];
      quad -= beta_[j] * (xty_[j] + grad_[j]);
      l1 += std::abs(beta_[j]);
    }
    return 0.5 * quad + lambda * l1;
  }

  // Feature-sign acceleration: repeatedly solve the penalized least-squares
  // problem exactly on the current nonzero support with the current sign
  // pattern, stepping only as far as the first sign crossing and dropping the
  // coordinates that hit zero, until the step reaches the orthant-interior
  // optimum. The Gram submatrix is factored once per call; removing variables
  // reuses the factor through the block-inverse identity
  //   y_{-S} solves A_{-S,-S} y = b_{-S}  where  y = x0 - Z (Z_S)^{-1} x0_S,
  // with Z = A^{-1}[:, S], so each removal costs one extra solve. Every step
  // is kept only if it lowers the objective, so the convergence criteria in
  // sweep_active remain authoritative.
  bool support_newton_step(double lambda) {
    std::vector<Eigen::Index> sup;
    sup.reserve(active_.size());
    for (std::size_t idx = 0; idx < active_.size(); ++idx) {
      if (beta_[active_[idx]] != 0.0) sup.push_back(active_[idx]);
    }
    const Eigen::Index m = static_cast<Eigen::Index>(sup.size());
    if (m == 0) return false;
    MatrixXd gs(m, m);
    VectorXd rhs(m);
    for (Eigen::Index a = 0; a < m; ++a) {
      const double cur = beta_[sup[a]];
      rhs[a] = xty_[sup[a]] - lambda * (cur > 0.0 ? 1.0 : -1.0);
      for (Eigen::Index b = 0; b < m; ++b) gs(a, b) = gram_(sup[a], sup[b]);
      // Keep the stabilizer well below the convergence tolerance so an exact
      // support solve can satisfy the stationarity criterion.
      gs(a, a) += 1e-12;
    }
    const Eigen::LDLT<MatrixXd> ldlt(gs);
    const VectorXd x0 = ldlt.solve(rhs);
    if (!x0.allFinite()) return false;
    std::vector<Eigen::Index> removed;   // positions (into sup) dropped so far
    std::vector<char> is_removed(m, 0);
    MatrixXd Z(m, 0);                    // A^{-1} columns for removed positions
    bool any_progress = false;
    for (int inner = 0; inner < 512; ++inner) {
      VectorXd target;
      if (removed.empty()) {
        target = x0;
      } else {
        const Eigen::Index s = static_cast<Eigen::Index>(removed.size());
        if (s >= m) break;
        MatrixXd zs(s, s);
        VectorXd c(s);
        for (Eigen::Index i = 0; i < s; ++i) {
          c[i] = x0[removed[i]];
          for (Eigen::Index j = 0; j < s; ++j) zs(i, j) = Z(removed[i], j);
        }
        const VectorXd w = zs.fullPivLu().solve(c);
        target = x0 - Z.leftCols(s) * w;
        for (Eigen::Index i = 0; i < s; ++i) target[removed[i]] = 0.0;
      }
      if (!target.allFinite()) break;
      double t = 1.0;
      for (Eigen::Index a = 0; a < m; ++a) {
        if (is_removed[a]) continue;
        const double cur = beta_[sup[a]];
        if ((cur > 0.0) != (target[a] > 0.0)) {
          const double denom = cur - target[a];
          if (denom != 0.0) t = std::min(t, cur / denom);
        }
      }
      if (!(t > 0.0)) break;
      const double obj_before = objective(lambda);
      VectorXd old_beta(m);
      for (Eigen::Index a = 0; a < m; ++a) old_beta[a] = beta_[sup[a]];
      for (Eigen::Index a = 0; a < m; ++a) {
        if (is_removed[a]) continue;
        double nb = old_beta[a] + t * (target[a] - old_beta[a]);
        if (std::abs(nb) < 1e-14) nb = 0.0;
        const double d = nb - old_beta[a];
        if (d != 0.0) {
          grad_ -= gram_.col(sup[a]) * d;
          beta_[sup[a]] = nb;
        }
      }
      if (!(objective(lambda) < obj_before)) {
        for (Eigen::Index a = 0; a < m; ++a) {
          const double d = old_beta[a] - beta_[sup[a]];
          if (d != 0.0) {
            grad_ -= gram_.col(sup[a]) * d;
            beta_[sup[a]] = old_beta[a];
          }
        }
        break;
      }
      any_progress = true;
      if (t >= 1.0) break;  // reached the orthant-interior optimum
      bool any_removed = false;
      for (Eigen::Index a = 0; a < m; ++a) {
        if (!is_removed[a] && beta_[sup[a]] == 0.0) {
          is_removed[a] = 1;
          removed.push_back(a);
          VectorXd e = VectorXd::Zero(m);
          e[a] = 1.0;
          Z.conservativeResize(m, static_cast<Eigen::Index>(removed.size()));
          Z.col(Z.cols() - 1) = ldlt.solve(e);
          any_removed = true;
        }
      }
      if (!any_removed) break;
    }
    return any_progress;
  }

  static double soft(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
  }

  double n_;
  MatrixXd gram_;
  VectorXd xty_;
  double yty_;
  VectorXd beta_;
  VectorXd grad_;
  std::vector<Eigen::Index> active_;
  std::vector<char> in_active_ = std::vector<char>(gram_.cols(), 0);
};

std::vector<double> lambda_path(double lambda_max, int grid, double min_ratio) {
  std::vector<double> path(grid);
  const double lo = std::log(lambda_max * min_ratio);
  const double hi = std::log(lambda_max);
  for (int i = 0; i < grid; ++i) {
    path[i] = std::exp(hi + (lo - hi) * i / (grid - 1));
  }
  return path;
}

struct LassoModel {
  double intercept = 0.0;
  VectorXd coef;  // on raw columns
};

LassoModel to_raw(const Standardized& s, const VectorXd& beta_std) {
  LassoModel m;
  m.coef = VectorXd::Zero(beta_std.size());
  double shift = 0.0;
  for (Eigen::Index j = 0; j < beta_std.size(); ++j) {
    if (s.sigma[j] > 0.0 && beta_std[j] != 0.0) {
      m.coef[j] = beta_std[j] / s.sigma[j];
      shift += m.coef[j] * s.mu[j];
    }
  }
  m.intercept = s.y_mean - shift;
  return m;
}

// Full CV-lasso on an arbitrary raw design matrix.
LassoModel lasso_cv_on(const MatrixXd& X, const VectorXd& y, const LearnerSpec& spec,
                       std::uint64_t seed, LassoFitInfo* info) {
  const std::size_t n = static_cast<std::size_t>(X.rows());
  if (spec.cv_folds < 2) throw std::invalid_argument("lasso needs >= 2 CV folds");
  if (n < static_cast<std::size_t>(spec.cv_folds)) {
    throw std::invalid_argument("lasso needs n >= number of CV folds");
  }

  const Standardized full = standardize(X, y);
  double lambda_max = 0.0;
  {
    const VectorXd g = (full.X.transpose() * full.y) / static_cast<double>(n);
    lambda_max = g.cwiseAbs().maxCoeff();
  }
  if (!(lambda_max > 0.0)) {
    // constant outcome or fully degenerate design: intercept-only model
    LassoModel m;
    m.intercept = full.y_mean;
    m.coef = VectorXd::Zero(X.cols());
    if (info) {
      info->lambda = 0.0;
      info->intercept = m.intercept;
      info->coefficients = m.coef;
    }
    return m;
  }

  const auto path = lambda_path(lambda_max, spec.lambda_grid, spec.lambda_min_ratio);
  std::vector<double> cv_mse(path.size(), 0.0);

  const auto folds = cv_folds(n, spec.cv_folds, derive_seed(seed, 0x1a550ULL));
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<char> held(n, 0);
    for (auto i : folds[f]) held[i] = 1;
    const std::size_t ntr = n - folds[f].size();
    MatrixXd Xtr(ntr, X.cols());
    VectorXd ytr(ntr);
    std::size_t r = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!held[i]) {
        Xtr.row(r) = X.row(i);
        ytr[r] = y[i];
        ++r;
      }
    }
    const Standardized st = standardize(Xtr, ytr);
    LassoSolver solver(st.X, st.y);
    bool frozen = false;
    for (std::size_t li = 0; li < path.size(); ++li) {
      if (!frozen) {
        solver.fit(path[li]);
        frozen = solver.saturated(st.X.rows());
      }
      const LassoModel m = to_raw(st, solver.beta());
      double sse = 0.0;
      for (auto i : folds[f]) {
        const double pred = m.intercept + X.row(i).dot(m.coef);
        const double e = y[i] - pred;
        sse += e * e;
      }
      cv_mse[li] += sse / static_cast<double>(folds[f].size()) / folds.size();
    }
  }

  std::size_t best = 0;
  for (std::size_t li = 1; li < path.size(); ++li) {
    if (cv_mse[li] < cv_mse[best]) best = li;
  }

  LassoSolver solver(full.X, full.y);
  for (std::size_t li = 0; li <= best; ++li) {
    solver.fit(path[li]);
    if (li < best && solver.saturated(full.X.rows())) break;
  }
  const LassoModel m = to_raw(full, solver.beta());
  if (info) {
    info->lambda = path[best];
    info->intercept = m.intercept;
    info->coefficients = m.coef;
    const VectorXd g = solver.gradients();
    info->gradients.assign(g.data(), g.data() + g.size());
    info->lambda_path = path;
    info->cv_mse = cv_mse;
  }
  return m;
}

LassoModel lasso_at_on(const MatrixXd& X, const VectorXd& y, double lambda,
                       LassoFitInfo* info) {
  const Standardized st = standardize(X, y);
  LassoSolver solver(st.X, st.y);
  solver.fit(lambda);
  const LassoModel m = to_raw(st, solver.beta());
  if (info) {
    info->lambda = lambda;
    info->intercept = m.intercept;
    info->coefficients = m.coef;
    const VectorXd g = solver.gradients();
    info->gradients.assign(g.data(), g.data() + g.size());
  }
  return m;
}

}  // namespace

std::string to_string(LearnerKind k) {
  switch (k) {
    case LearnerKind::zero: return "zero";
    case LearnerKind::marginal_mean: return "marginal_mean";
    case LearnerKind::ols: return "ols";
    case LearnerKind::ols_interactions: return "ols_interactions";
    case LearnerKind::lasso_cv: return "lasso_cv";
    case LearnerKind::hal_lite: return "hal_lite";
    case LearnerKind::super_learner: return "super_learner";
  }
  throw std::logic_error("unknown learner kind");
}

LearnerKind learner_kind_from_string(const std::string& s) {
  if (s == "zero") return LearnerKind::zero;
  if (s == "marginal_mean") return LearnerKind::marginal_mean;
  if (s == "ols") return LearnerKind::ols;
  if (s == "ols_interactions") return LearnerKind::ols_interactions;
  if (s == "lasso_cv") return LearnerKind::lasso_cv;
  if (s == "hal_lite") return LearnerKind::hal_lite;
  if (s == "super_learner") return LearnerKind::super_learner;
  throw std::invalid_argument("unknown learner kind: " + s);
}

void LearnerSpec::validate() const {
  if (lambda_grid < 2 || lambda_min_ratio <= 0.0 || cv_folds < 2 || sl_folds < 2 ||
      hal_knot_budget < 0) {
    throw std::invalid_argument("learner hyperparameters must be positive");
  }
  if (kind == LearnerKind::hal_lite) {
    if (hal_max_degree != 2 && hal_max_degree != 3) {
      throw std::invalid_argument("hal max_degree must be 2 or 3");
    }
    if (hal_smoothness != 0 && hal_smoothness != 1) {
      throw std::invalid_argument("hal smoothness must be 0 or 1");
    }
  }
  if (kind == LearnerKind::super_learner && library.empty()) {
    throw std::invalid_argument("super_learner requires a nonempty library");
  }
  for (const auto& sub : library) sub.validate();
}

LearnerSpec LearnerSpec::of(LearnerKind k) {
  LearnerSpec s;
  s.kind = k;
  return s;
}

LearnerSpec LearnerSpec::hal(int max_degree, int smoothness, int knot_budget) {
  LearnerSpec s;
  s.kind = LearnerKind::hal_lite;
  s.hal_max_degree = max_degree;
  s.hal_smoothness = smoothness;
  s.hal_knot_budget = knot_budget;
  return s;
}

std::vector<LearnerSpec> LearnerSpec::mis_library() {
  return {of(LearnerKind::zero), of(LearnerKind::marginal_mean), of(LearnerKind::ols),
          of(LearnerKind::ols_interactions), of(LearnerKind::lasso_cv)};
}

std::vector<LearnerSpec> LearnerSpec::rich_library(int knot_budget) {
  auto lib = mis_library();
  for (int degree : {2, 3}) {
    for (int smooth : {0, 1}) {
      lib.push_back(hal(degree, smooth, knot_budget));
    }
  }
  return lib;
}

double HalBasis::eval(std::size_t term, const VectorXd& x) const {
  const HalBasisTerm& t = terms[term];
  double out = 1.0;
  for (std::size_t j = 0; j < t.dims.size(); ++j) {
    const double v = x[t.dims[j]];
    if (smoothness == 0) {
      if (v < t.knots[j]) return 0.0;
    } else {
      const double h = v - t.knots[j];
      if (h <= 0.0) return 0.0;
      out *= h;
    }
  }
  return out;
}

HalBasis build_hal_basis(const MatrixXd& X, int max_degree, int smoothness,
                         int knot_budget) {
  const int p = static_cast<int>(X.cols());
  const std::size_t n = static_cast<std::size_t>(X.rows());
  if (max_degree < 1) throw std::invalid_argument("hal max_degree must be >= 1");
  max_degree = std::min(max_degree, p);  // low-dimensional data caps the degree
  if (knot_budget < 1) throw std::invalid_argument("hal knot_budget must be >= 1");

  // Per-dimension knots from evenly spaced empirical quantiles of the
  // distinct values, truncated to the number of distinct values.
  std::vector<std::vector<double>> knots(p);
  for (int d = 0; d < p; ++d) {
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < n; ++i) vals[i] = X(i, d);
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    const std::size_t m = vals.size();
    const std::size_t b = std::min<std::size_t>(knot_budget, m);
    std::vector<double> ks;
    for (std::size_t i = 0; i < b; ++i) {
      const double prob = static_cast<double>(i + 1) / static_cast<double>(b + 1);
      const auto idx = static_cast<std::size_t>(std::lround(prob * (m - 1)));
      ks.push_back(vals[idx]);
    }
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    knots[d] = std::move(ks);
  }

  HalBasis basis;
  basis.smoothness = smoothness;

  // All covariate subsets of size <= max_degree, each expanded over the
  // cartesian product of its per-dimension knots.
  std::vector<int> subset;
  std::unordered_set<std::size_t> seen;
  std::vector<double> col(n);
  const auto column_hash = [&](const HalBasisTerm& t) {
    std::size_t h = 0xcbf29ce484222325ULL;
    HalBasis probe;
    probe.smoothness = smoothness;
    probe.terms = {t};
    for (std::size_t i = 0; i < n; ++i) {
      const double v = probe.eval(0, X.row(i));
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof(bits));
      h = (h ^ bits) * 0x100000001b3ULL;
    }
    return h;
  };

  const auto expand = [&](const std::vector<int>& dims) {
    std::vector<std::size_t> cursor(dims.size(), 0);
    while (true) {
      HalBasisTerm t;
      t.dims = dims;
      for (std::size_t j = 0; j < dims.size(); ++j) t.knots.push_back(knots[dims[j]][cursor[j]]);
      if (seen.insert(column_hash(t)).second) basis.terms.push_back(std::move(t));
      std::size_t j = 0;
      for (; j < dims.size(); ++j) {
        if (++cursor[j] < knots[dims[j]].size()) break;
        cursor[j] = 0;
      }
      if (j == dims.size()) break;
    }
  };

  const std::function<void(int, int)> rec = [&](int start, int remaining) {
    if (!subset.empty()) expand(subset);
    if (remaining == 0) return;
    for (int d = start; d < p; ++d) {
      subset.push_back(d);
      rec(d + 1, remaining - 1);
      subset.pop_back();
    }
  };
  rec(0, max_degree);
  return basis;
}

OutcomePredictor fit_linear(const Dataset& data, bool interactions, bool ridge_fallback) {
  const std::size_t n = data.n();
  const VectorXd y = outcomes(data);

  const auto build_row = [interactions](const VectorXd& x, int a) {
    VectorXd base = ax_row(x, a);
    if (interactions) append_interactions(base);
    VectorXd row(base.size() + 1);
    row[0] = 1.0;
    row.tail(base.size()) = base;
    return row;
  };

  const Eigen::Index ncols = build_row(data.observations.front().x, 0).size();
  MatrixXd X(n, ncols);
  for (std::size_t i = 0; i < n; ++i) {
    X.row(i) = build_row(data.observations[i].x, data.observations[i].a);
  }

  const MatrixXd xtx = X.transpose() * X;
  const VectorXd xty = X.transpose() * y;
  Eigen::FullPivLU<MatrixXd> lu(xtx);
  lu.setThreshold(1e-10);
  VectorXd beta;
  if (lu.isInvertible()) {
    beta = lu.solve(xty);
  } else if (ridge_fallback) {
    MatrixXd reg = xtx;
    reg.diagonal().array() += kRidge;
    beta = reg.ldlt().solve(xty);
  } else {
    throw std::runtime_error("singular design");
  }

  auto coefs = std::make_shared<VectorXd>(std::move(beta));
  return {[coefs, build_row](const VectorXd& x, int a) {
            return build_row(x, a).dot(*coefs);
          },
          interactions ? "ols_interactions" : "ols", 0.0};
}

OutcomePredictor fit_lasso_cv(const Dataset& data, const LearnerSpec& spec,
                              std::uint64_t seed, LassoFitInfo* info) {
  const MatrixXd X = ax_design(data);
  const VectorXd y = outcomes(data);
  const LassoModel m = lasso_cv_on(X, y, spec, seed, info);
  auto coefs = std::make_shared<LassoModel>(m);
  return {[coefs](const VectorXd& x, int a) {
            return coefs->intercept + ax_row(x, a).dot(coefs->coef);
          },
          "lasso_cv", 0.0};
}

OutcomePredictor fit_lasso_at(const Dataset& data, double lambda, LassoFitInfo* info) {
  const MatrixXd X = ax_design(data);
  const VectorXd y = outcomes(data);
  const LassoModel m = lasso_at_on(X, y, lambda, info);
  auto coefs = std::make_shared<LassoModel>(m);
  return {[coefs](const VectorXd& x, int a) {
            return coefs->intercept + ax_row(x, a).dot(coefs->coef);
          },
          "lasso_at", 0.0};
}

OutcomePredictor fit_hal_lite(const Dataset& data, const LearnerSpec& spec,
                              std::uint64_t seed, LassoFitInfo* info) {
  const std::size_t n = data.n();
  const std::size_t p = data.dim();
  MatrixXd covariates(n, p);
  for (std::size_t i = 0; i < n; ++i) covariates.row(i) = data.observations[i].x;

  // Default knots per dimension; degree-3 tensor products grow cubically in
  // the budget, so their default is capped lower to keep the basis tractable.
  const int budget_cap = spec.hal_max_degree >= 3 ? 12 : 25;
  const int budget = spec.hal_knot_budget > 0
                         ? spec.hal_knot_budget
                         : std::max(1, std::min<int>(budget_cap, static_cast<int>(n / 10)));
  auto basis = std::make_shared<HalBasis>(
      build_hal_basis(covariates, spec.hal_max_degree, spec.hal_smoothness, budget));
  const std::size_t nb = basis->size();

  // Design: [A, X, B(X), A*B(X)].
  MatrixXd X(n, 1 + p + 2 * nb);
  for (std::size_t i = 0; i < n; ++i) {
    const Observation& v = data.observations[i];
    X(i, 0) = v.a;
    for (std::size_t j = 0; j < p; ++j) X(i, 1 + j) = v.x[j];
    for (std::size_t b = 0; b < nb; ++b) {
      const double e = basis->eval(b, v.x);
      X(i, 1 + p + b) = e;
      X(i, 1 + p + nb + b) = v.a * e;
    }
  }
  const VectorXd y = outcomes(data);
  const double bound = y.cwiseAbs().maxCoeff();

  const LassoModel m = lasso_cv_on(X, y, spec, seed, info);

  // Keep only the active terms for prediction.
  struct Active {
    Eigen::Index col;
    double coef;
  };
  auto active = std::make_shared<std::vector<Active>>();
  for (Eigen::Index j = 0; j < m.coef.size(); ++j) {
    if (m.coef[j] != 0.0) active->push_back({j, m.coef[j]});
  }
  const double intercept = m.intercept;

  auto predict = [basis, active, intercept, bound, p, nb](const VectorXd& x, int a) {
    double out = intercept;
    for (const auto& t : *active) {
      const std::size_t j = static_cast<std::size_t>(t.col);
      double v;
      if (j == 0) {
        v = a;
      } else if (j < 1 + p) {
        v = x[j - 1];
      } else if (j < 1 + p + nb) {
        v = basis->eval(j - 1 - p, x);
      } else {
        v = a == 1 ? basis->eval(j - 1 - p - nb, x) : 0.0;
      }
      out += t.coef * v;
    }
    return std::clamp(out, -bound, bound);
  };
  return {predict, "hal_lite", bound};
}

namespace {

// Exact simplex-constrained least squares: minimize ||y - Z w||^2 over
// w >= 0, sum w = 1, by enumerating active sets (library sizes are small).
VectorXd simplex_lsq(const MatrixXd& Z, const VectorXd& y) {
  const int L = static_cast<int>(Z.cols());
  if (L > 20) throw std::invalid_argument("library too large for exact stacking");
  double best_obj = std::numeric_limits<double>::infinity();
  VectorXd best = VectorXd::Zero(L);
  bool found = false;
  for (unsigned mask = 1; mask < (1u << L); ++mask) {
    std::vector<int> sel;
    for (int j = 0; j < L; ++j) {
      if (mask & (1u << j)) sel.push_back(j);
    }
    const int m = static_cast<int>(sel.size());
    MatrixXd Zs(Z.rows(), m);
    for (int j = 0; j < m; ++j) Zs.col(j) = Z.col(sel[j]);
    // KKT system for min ||y - Zs v||^2 s.t. 1'v = 1.
    MatrixXd kkt(m + 1, m + 1);
    kkt.topLeftCorner(m, m) = Zs.transpose() * Zs;
    kkt.topLeftCorner(m, m).diagonal().array() += 1e-12;
    kkt.topRightCorner(m, 1).setOnes();
    kkt.bottomLeftCorner(1, m).setOnes();
    kkt(m, m) = 0.0;
    VectorXd rhs(m + 1);
    rhs.head(m) = Zs.transpose() * y;
    rhs[m] = 1.0;
    Eigen::FullPivLU<MatrixXd> lu(kkt);
    if (!lu.isInvertible()) continue;
    const VectorXd sol = lu.solve(rhs);
    bool feasible = true;
    for (int j = 0; j < m; ++j) {
      if (sol[j] < -1e-12) {
        feasible = false;
        break;
      }
    }
    if (!feasible) continue;
    const double obj = (y - Zs * sol.head(m)).squaredNorm();
    // strict improvement keeps ties resolved toward earlier subsets
    if (obj < best_obj - 1e-12 || !found) {
      best_obj = obj;
      best.setZero();
      for (int j = 0; j < m; ++j) best[sel[j]] = std::max(0.0, sol[j]);
      found = true;
    }
  }
  best /= best.sum();
  return best;
}

}  // namespace

OutcomePredictor fit_super_learner(const Dataset& data,
                                   const std::vector<LearnerSpec>& library, int folds,
                                   std::uint64_t seed, FittedStack* stack) {
  if (library.empty()) throw std::invalid_argument("super_learner requires a nonempty library");
  if (folds < 2) throw std::invalid_argument("super_learner requires >= 2 folds");
  const std::size_t n = data.n();
  const VectorXd y = outcomes(data);

  const auto fold_idx = cv_folds(n, folds, derive_seed(seed, 0x51f01dULL));

  std::vector<std::size_t> kept;
  std::vector<std::string> dropped;
  MatrixXd Z(n, library.size());
  std::vector<double> cv_risk;

  for (std::size_t l = 0; l < library.size(); ++l) {
    VectorXd preds(n);
    bool ok = true;
    for (std::size_t f = 0; f < fold_idx.size() && ok; ++f) {
      std::vector<char> held(n, 0);
      for (auto i : fold_idx[f]) held[i] = 1;
      Dataset train;
      train.propensity = data.propensity;
      for (std::size_t i = 0; i < n; ++i) {
        if (!held[i]) train.observations.push_back(data.observations[i]);
      }
      try {
        const OutcomePredictor q =
            fit_learner(train, library[l], derive_seed(seed, f, l));
        for (auto i : fold_idx[f]) {
          preds[i] = q.predict(data.observations[i].x, data.observations[i].a);
          if (!std::isfinite(preds[i])) throw std::runtime_error("nonfinite CV prediction");
        }
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (ok) {
      Z.col(kept.size()) = preds;
      kept.push_back(l);
      cv_risk.push_back((y - preds).squaredNorm() / static_cast<double>(n));
    } else {
      dropped.push_back(to_string(library[l].kind));
    }
  }
  if (kept.empty()) throw std::runtime_error("all super learner base learners failed");
  Z.conservativeResize(Eigen::NoChange, kept.size());

  const VectorXd w = simplex_lsq(Z, y);

  auto bases = std::make_shared<std::vector<OutcomePredictor>>();
  auto weights = std::make_shared<std::vector<double>>();
  for (std::size_t j = 0; j < kept.size(); ++j) {
    if (w[j] > 0.0) {
      bases->push_back(fit_learner(data, library[kept[j]], derive_seed(seed, 0xf011ULL, kept[j])));
      weights->push_back(w[j]);
    }
  }

  if (stack) {
    stack->learner_names.clear();
    for (auto l : kept) stack->learner_names.push_back(to_string(library[l].kind));
    stack->weights = w;
    stack->cv_risk = cv_risk;
    stack->stack_cv_risk = (y - Z * w).squaredNorm() / static_cast<double>(n);
    stack->dropped = dropped;
  }

  return {[bases, weights](const VectorXd& x, int a) {
            double out = 0.0;
            for (std::size_t j = 0; j < bases->size(); ++j) {
              out += (*weights)[j] * (*bases)[j].predict(x, a);
            }
            return out;
          },
          "super_learner", 0.0};
}

OutcomePredictor fit_learner(const Dataset& data, const LearnerSpec& spec,
                             std::uint64_t seed) {
  spec.validate();
  switch (spec.kind) {
    case LearnerKind::zero:
      return zero_predictor();
    case LearnerKind::marginal_mean: {
      const VectorXd y = outcomes(data);
      auto q = constant_predictor(y.mean());
      q.name = "marginal_mean";
      return q;
    }
    case LearnerKind::ols:
      return fit_linear(data, false);
    case LearnerKind::ols_interactions:
      return fit_linear(data, true);
    case LearnerKind::lasso_cv:
      return fit_lasso_cv(data, spec, seed);
    case LearnerKind::hal_lite:
      return fit_hal_lite(data, spec, seed);
    case LearnerKind::super_learner:
      return fit_super_learner(data, spec.library, spec.sl_folds, seed);
  }
  throw std::logic_error("unknown learner kind");
}

bool is_data_independent(const LearnerSpec& spec) {
  if (spec.kind == LearnerKind::zero) return true;
  if (spec.kind == LearnerKind::super_learner) {
    return spec.library.size() == 1 && is_data_independent(spec.library.front());
  }
  return false;
}

}  // namespace aipw
