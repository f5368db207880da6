#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "homelist/error.hpp"

namespace homelist {

/// One fixed-effect dimension: a group label per observation.
struct FixedEffect {
  std::string name;
  std::vector<std::string> groups;
};

struct RegressionInput {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  std::vector<std::string> names;     // one per column of X
  std::vector<FixedEffect> effects;   // absorbed (OLS) or dummies (logit)
  // Adds a constant when there are no fixed effects.
  bool intercept = true;
};

struct RegressionResult {
  std::vector<std::string> names;
  Eigen::VectorXd coef;
  Eigen::VectorXd se;
  std::size_t observations = 0;
  std::size_t absorbed_groups = 0;
  std::size_t dropped_observations = 0;  // logit: groups without outcome variation
  int iterations = 0;
  double r2_within = 0.0;                // OLS
  double log_likelihood = 0.0;           // logit
  Eigen::VectorXd residuals;             // OLS, on the kept observations

  std::size_t index(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ValidationError("no coefficient named " + name);
    return static_cast<std::size_t>(it - names.begin());
  }
  double coefficient(const std::string& name) const { return coef[static_cast<Eigen::Index>(index(name))]; }
  double std_error(const std::string& name) const { return se[static_cast<Eigen::Index>(index(name))]; }
  double t_stat(const std::string& name) const { return coefficient(name) / std_error(name); }
};

namespace detail {

inline void check_input(const RegressionInput& in) {
  const auto n = in.y.size();
  if (in.X.rows() != n) throw ValidationError("regressor rows differ from response length");
  if (static_cast<std::size_t>(in.X.cols()) != in.names.size()) {
    throw ValidationError("regressor names differ from column count");
  }
  for (const auto& fe : in.effects) {
    if (static_cast<Eigen::Index>(fe.groups.size()) != n) {
      throw ValidationError("fixed effect '" + fe.name + "' has wrong length");
    }
  }
  if (!in.y.allFinite() || !in.X.allFinite()) throw ValidationError("non-finite regression data");
}

/// Maps labels to dense integer codes in order of first appearance.
inline std::vector<int> encode_groups(const std::vector<std::string>& labels, int& count) {
  std::map<std::string, int> codes;
  std::vector<int> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    auto [it, fresh] = codes.emplace(l, static_cast<int>(codes.size()));
    out.push_back(it->second);
  }
  count = static_cast<int>(codes.size());
  return out;
}

inline void demean_once(Eigen::MatrixXd& M, const std::vector<int>& g, int groups) {
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(groups, M.cols());
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(groups);
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    sums.row(g[static_cast<std::size_t>(i)]) += M.row(i);
    counts[g[static_cast<std::size_t>(i)]] += 1.0;
  }
  for (int k = 0; k < groups; ++k) sums.row(k) /= counts[k];
  for (Eigen::Index i = 0; i < M.rows(); ++i) M.row(i) -= sums.row(g[static_cast<std::size_t>(i)]);
}

}  // namespace detail

/// Least squares with fixed effects absorbed by demeaning (alternating over
/// dimensions until the largest update falls below `tol` relative to the data
/// scale). Coefficients equal those of the regression with explicit dummies.
inline RegressionResult fit_ols_fe(const RegressionInput& in, double tol = 1e-10,
                                   int max_sweeps = 100000) {
  detail::check_input(in);
  const auto n = in.y.size();
  const auto k = in.X.cols();

  std::vector<std::vector<int>> codes;
  std::vector<int> counts;
  for (const auto& fe : in.effects) {
    int c = 0;
    codes.push_back(detail::encode_groups(fe.groups, c));
    counts.push_back(c);
  }
  if (codes.empty() && in.intercept) {
    codes.emplace_back(static_cast<std::size_t>(n), 0);
    counts.push_back(1);
  }
  std::size_t absorbed = 0;
  for (int c : counts) absorbed += static_cast<std::size_t>(c);
  if (counts.size() > 1) absorbed -= counts.size() - 1;
  if (static_cast<Eigen::Index>(absorbed) + k >= n) {
    throw InsufficientDataError("need more observations than parameters (" + std::to_string(n) +
                                " vs " + std::to_string(absorbed + static_cast<std::size_t>(k)) + ")");
  }

  Eigen::MatrixXd M(n, k + 1);
  M.col(0) = in.y;
  M.rightCols(k) = in.X;
  const Eigen::VectorXd raw_norms = M.colwise().norm().transpose();
  int sweeps = 0;
  if (codes.size() == 1) {
    detail::demean_once(M, codes[0], counts[0]);
    sweeps = 1;
  } else if (codes.size() > 1) {
    // Column-relative stopping rule, so rescaling a column does not change
    // the number of sweeps.
    const Eigen::RowVectorXd scale = M.cwiseAbs().colwise().maxCoeff();
    for (;;) {
      const Eigen::MatrixXd before = M;
      for (std::size_t d = 0; d < codes.size(); ++d) detail::demean_once(M, codes[d], counts[d]);
      ++sweeps;
      const Eigen::RowVectorXd change = (M - before).cwiseAbs().colwise().maxCoeff();
      if ((change.array() <= tol * scale.array()).all()) break;
      if (sweeps >= max_sweeps) throw ConvergenceError("fixed-effect demeaning did not converge");
    }
  }
  const Eigen::VectorXd yt = M.col(0);
  const Eigen::MatrixXd Xt = M.rightCols(k);

  for (Eigen::Index j = 0; j < k; ++j) {
    if (Xt.col(j).norm() <= 1e-9 * (1.0 + raw_norms[j + 1])) {
      throw RankDeficientError("regressor '" + in.names[static_cast<std::size_t>(j)] +
                               "' is constant within fixed-effect groups");
    }
  }
  // Equilibrate columns by powers of two (exact in floating point): the QR
  // sees the same matrix whatever units a regressor is measured in.
  Eigen::VectorXd col_scale(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    int e = 0;
    std::frexp(Xt.col(j).cwiseAbs().maxCoeff(), &e);
    col_scale[j] = std::ldexp(1.0, -e);
  }
  const Eigen::MatrixXd Xs = Xt * col_scale.asDiagonal();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xs);
  qr.setThreshold(1e-10);
  if (qr.rank() < k) throw RankDeficientError("regressors are collinear after absorbing fixed effects");

  RegressionResult r;
  r.names = in.names;
  const Eigen::VectorXd coef_s = qr.solve(yt);
  r.coef = coef_s.cwiseProduct(col_scale);
  r.residuals = yt - Xs * coef_s;
  r.observations = static_cast<std::size_t>(n);
  r.absorbed_groups = absorbed;
  r.iterations = sweeps;
  const double dof = static_cast<double>(n - k) - static_cast<double>(absorbed);
  const double sigma2 = r.residuals.squaredNorm() / dof;
  const Eigen::MatrixXd XtX_inv =
      (Xs.transpose() * Xs).ldlt().solve(Eigen::MatrixXd::Identity(k, k));
  r.se = (sigma2 * XtX_inv.diagonal()).cwiseSqrt().cwiseProduct(col_scale);
  const double tss = yt.squaredNorm();
  r.r2_within = tss > 0 ? 1.0 - r.residuals.squaredNorm() / tss : 0.0;
  return r;
}

struct LogitOptions {
  double gradient_tol = 1e-8;
  int max_iterations = 200;
  double separation_eta = 30.0;  // |linear index| beyond which fits count as separated
};

/// Logistic regression by Newton-Raphson with step halving. Fixed effects
/// enter as explicit dummies; groups whose outcome never varies are dropped
/// first (repeatedly, across dimensions).
inline RegressionResult fit_logit(const RegressionInput& in, const LogitOptions& opt = {}) {
  detail::check_input(in);
  const auto n = in.y.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (in.y[i] != 0.0 && in.y[i] != 1.0) throw ValidationError("logit response must be 0/1");
  }

  std::vector<char> keep(static_cast<std::size_t>(n), 1);
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& fe : in.effects) {
      std::map<std::string, std::pair<double, double>> stats;  // count, positives
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!keep[static_cast<std::size_t>(i)]) continue;
        auto& s = stats[fe.groups[static_cast<std::size_t>(i)]];
        s.first += 1;
        s.second += in.y[i];
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!keep[static_cast<std::size_t>(i)]) continue;
        const auto& s = stats[fe.groups[static_cast<std::size_t>(i)]];
        if (s.second == 0 || s.second == s.first) {
          keep[static_cast<std::size_t>(i)] = 0;
          changed = true;
        }
      }
    }
  }
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (keep[static_cast<std::size_t>(i)]) rows.push_back(i);
  }
  const auto m = static_cast<Eigen::Index>(rows.size());
  if (m == 0) throw InsufficientDataError("no observations with outcome variation");

  // Dummy columns: every group of the first dimension, all but the first
  // group of further dimensions; a constant when there are no effects.
  std::vector<std::string> names = in.names;
  std::vector<std::vector<Eigen::Index>> dummy_cols;  // per dimension, code -> column
  std::vector<std::vector<int>> codes;
  Eigen::Index extra = 0;
  for (std::size_t d = 0; d < in.effects.size(); ++d) {
    std::vector<std::string> labels;
    for (auto i : rows) labels.push_back(in.effects[d].groups[static_cast<std::size_t>(i)]);
    int c = 0;
    codes.push_back(detail::encode_groups(labels, c));
    std::vector<Eigen::Index> cols(static_cast<std::size_t>(c), -1);
    std::map<int, std::string> label_of;
    for (std::size_t r = 0; r < labels.size(); ++r) label_of.emplace(codes.back()[r], labels[r]);
    for (int g = (d == 0 ? 0 : 1); g < c; ++g) {
      cols[static_cast<std::size_t>(g)] = in.X.cols() + extra++;
      names.push_back(in.effects[d].name + "=" + label_of[g]);
    }
    dummy_cols.push_back(std::move(cols));
  }
  const bool constant = in.effects.empty() && in.intercept;
  if (constant) {
    names.push_back("(intercept)");
    ++extra;
  }
  const Eigen::Index k = in.X.cols() + extra;
  if (k >= m) throw InsufficientDataError("need more observations than parameters");

  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(m, k);
  Eigen::VectorXd y(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    Z.row(r).head(in.X.cols()) = in.X.row(rows[static_cast<std::size_t>(r)]);
    y[r] = in.y[rows[static_cast<std::size_t>(r)]];
    for (std::size_t d = 0; d < codes.size(); ++d) {
      const auto col = dummy_cols[d][static_cast<std::size_t>(codes[d][static_cast<std::size_t>(r)])];
      if (col >= 0) Z(r, col) = 1.0;
    }
    if (constant) Z(r, k - 1) = 1.0;
  }
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
    qr.setThreshold(1e-10);
    if (qr.rank() < k) throw RankDeficientError("logit design is rank deficient");
  }

  auto loglik = [&](const Eigen::VectorXd& eta) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      // log(1 + e^x) computed stably.
      const double x = eta[i];
      const double softplus = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
      ll += y[i] * x - softplus;
    }
    return ll;
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd eta = Z * beta;
  double ll = loglik(eta);
  Eigen::MatrixXd H(k, k);
  int it = 0;
  for (;; ++it) {
    Eigen::VectorXd p(m), w(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      p[i] = 1.0 / (1.0 + std::exp(-eta[i]));
      w[i] = p[i] * (1.0 - p[i]);
    }
    const Eigen::VectorXd grad = Z.transpose() * (y - p);
    H = Z.transpose() * w.asDiagonal() * Z;
    if (grad.norm() < opt.gradient_tol) break;
    if (it >= opt.max_iterations) {
      if (eta.cwiseAbs().maxCoeff() > opt.separation_eta) {
        throw SeparationError("outcome is (quasi-)separated by the regressors");
      }
      throw ConvergenceError("logit did not converge in " + std::to_string(it) + " iterations");
    }
    const Eigen::VectorXd step = H.ldlt().solve(grad);
    if (!step.allFinite()) throw SeparationError("singular information matrix; outcome separated");
    double t = 1.0;
    for (int halving = 0; halving < 50; ++halving, t /= 2) {
      const Eigen::VectorXd cand = beta + t * step;
      const Eigen::VectorXd cand_eta = Z * cand;
      const double cand_ll = loglik(cand_eta);
      if (cand_ll >= ll - 1e-12 * std::fabs(ll)) {
        beta = cand;
        eta = cand_eta;
        ll = cand_ll;
        break;
      }
    }
  }
  if (eta.cwiseAbs().maxCoeff() > opt.separation_eta) {
    throw SeparationError("outcome is (quasi-)separated by the regressors");
  }

  RegressionResult r;
  r.names = names;
  r.coef = beta;
  const Eigen::MatrixXd cov = H.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
  r.se = cov.diagonal().cwiseSqrt();
  r.observations = static_cast<std::size_t>(m);
  r.dropped_observations = static_cast<std::size_t>(n - m);
  r.absorbed_groups = static_cast<std::size_t>(extra - (constant ? 1 : 0));
  r.iterations = it;
  r.log_likelihood = ll;
  return r;
}

}  // namespace homelist
