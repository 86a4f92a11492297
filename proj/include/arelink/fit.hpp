#pragma once

// Penalized-likelihood fitting for areal regression models with fixed,
// random-effect and Markov-random-field (ICAR) terms.
//
// Every penalized term is a block of columns with a quadratic penalty
// lambda_b * beta_b' S_b beta_b. Random-effect blocks use S_b = I (so the
// variance component is sigma_b^2 = scale / lambda_b); MRF blocks are
// reparameterized through the per-component sum-to-zero basis of the ICAR
// precision, so every S_b is positive definite on its own block.

#include "arelink/errors.hpp"
#include "arelink/formula.hpp"
#include "arelink/geojson.hpp"
#include "arelink/geom.hpp"
#include "arelink/mrf.hpp"
#include "arelink/nb.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace arelink {

/// Column name of a term's predictions when attached to a collection.
inline std::string prediction_column(const SmoothTerm& t) {
  const bool mrf = t.is_mrf();
  std::string s = mrf ? "mrf.smooth." : "random.effect.";
  if (t.is_slope()) s += t.covariate + "|";
  return s + t.group;
}

/// Summary label in the style "s(group)", "s(group,x)" or "s(group):x".
inline std::string term_label(const SmoothTerm& t) {
  switch (t.kind) {
    case TermKind::re_slope:
      return "s(" + t.group + "," + t.covariate + ")";
    case TermKind::mrf_slope:
      return "s(" + t.group + "):" + t.covariate;
    default:
      return "s(" + t.group + ")";
  }
}

struct TermBlock {
  TermKind kind = TermKind::fixed;
  SmoothTerm term;           // unused for the fixed block
  std::string label;
  Eigen::MatrixXd columns;   // n x m
  Eigen::MatrixXd penalty;   // m x m; empty for the fixed block
  double lambda = 0.0;
  std::vector<std::string> col_labels;
  /// Per-level coefficient map: level effect = level_basis.row(l) * beta_b.
  std::vector<std::string> levels;
  Eigen::MatrixXd level_basis;

  bool penalized() const { return kind != TermKind::fixed; }
  Eigen::Index width() const { return columns.cols(); }
};

struct Design {
  Family family = Family::gaussian;
  std::string formula;
  std::vector<TermBlock> blocks;  // blocks[0] is the fixed block
  Eigen::VectorXd y;
  Eigen::VectorXd offset;
  std::vector<std::string> warnings;

  Eigen::Index rows() const { return y.size(); }
  Eigen::Index cols() const {
    Eigen::Index p = 0;
    for (const auto& b : blocks) p += b.width();
    return p;
  }
  std::size_t penalized_count() const { return blocks.empty() ? 0 : blocks.size() - 1; }

  Eigen::MatrixXd model_matrix() const {
    Eigen::MatrixXd X(rows(), cols());
    Eigen::Index c = 0;
    for (const auto& b : blocks) {
      X.middleCols(c, b.width()) = b.columns;
      c += b.width();
    }
    return X;
  }

  /// Block-diagonal total penalty sum_b lambda_b S_b for the given lambdas.
  Eigen::MatrixXd total_penalty(const std::vector<double>& lambdas) const {
    const Eigen::Index p = cols();
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(p, p);
    Eigen::Index c = blocks.empty() ? 0 : blocks[0].width();
    for (std::size_t b = 1; b < blocks.size(); ++b) {
      const auto m = blocks[b].width();
      if (m > 0) S.block(c, c, m, m) = lambdas.at(b - 1) * blocks[b].penalty;
      c += m;
    }
    return S;
  }
};

namespace detail {

inline const json& attr(const AreaUnit& u, const std::string& var) {
  auto it = u.attrs.find(var);
  if (it == u.attrs.end())
    throw InputError("variable '" + var + "' not found for unit '" + u.name + "'");
  return *it;
}

inline Eigen::VectorXd numeric_column(const AreaCollection& coll, const std::string& var) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(coll.size()));
  for (std::size_t i = 0; i < coll.size(); ++i) {
    const json& x = attr(coll[i], var);
    if (!x.is_number())
      throw InputError("variable '" + var + "' is not numeric for unit '" + coll[i].name + "'");
    v(static_cast<Eigen::Index>(i)) = x.get<double>();
  }
  return v;
}

inline std::vector<std::string> level_column(const AreaCollection& coll, const std::string& var) {
  std::vector<std::string> v;
  v.reserve(coll.size());
  for (const auto& u : coll.units()) {
    const std::string s = identifier_text(attr(u, var));
    if (s.empty())
      throw InputError("grouping variable '" + var + "' is empty for unit '" + u.name + "'");
    v.push_back(s);
  }
  return v;
}

inline std::string join_names(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
  return s;
}

/// Symmetric solve with Jacobi scaling and an eigen-decomposition, so that
/// rank deficiency is detected and handled by a pseudo-inverse.
struct PenalizedSolve {
  Eigen::MatrixXd inverse;     // (pseudo-)inverse of H
  double log_det = 0.0;        // log|H| over the retained spectrum
  Eigen::Index rank = 0;
  Eigen::MatrixXd null_space;  // unscaled null directions, one per column
};

inline PenalizedSolve penalized_solve(const Eigen::MatrixXd& H) {
  const Eigen::Index p = H.rows();
  PenalizedSolve out;
  if (p == 0) {
    out.inverse = Eigen::MatrixXd::Zero(0, 0);
    return out;
  }
  Eigen::VectorXd d(p);
  for (Eigen::Index i = 0; i < p; ++i) d(i) = H(i, i) > 0 ? 1.0 / std::sqrt(H(i, i)) : 1.0;
  const Eigen::MatrixXd Hs = d.asDiagonal() * H * d.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Hs);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double tol = std::max(ev.cwiseAbs().maxCoeff(), 1.0) * 1e-11 * static_cast<double>(p);
  Eigen::VectorXd inv(p);
  std::vector<Eigen::Index> null_idx;
  for (Eigen::Index i = 0; i < p; ++i) {
    if (ev(i) > tol) {
      inv(i) = 1.0 / ev(i);
      out.log_det += std::log(ev(i));
      ++out.rank;
    } else {
      inv(i) = 0.0;
      null_idx.push_back(i);
    }
  }
  out.log_det -= 2.0 * d.array().log().sum();
  const Eigen::MatrixXd& V = es.eigenvectors();
  out.inverse = d.asDiagonal() * (V * inv.asDiagonal() * V.transpose()) * d.asDiagonal();
  out.null_space.resize(p, static_cast<Eigen::Index>(null_idx.size()));
  for (std::size_t k = 0; k < null_idx.size(); ++k)
    out.null_space.col(static_cast<Eigen::Index>(k)) = (d.asDiagonal() * V.col(null_idx[k])).normalized();
  return out;
}

inline double poisson_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu) {
  double d = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double yi = y(i);
    d += (yi > 0 ? yi * std::log(yi / mu(i)) : 0.0) - (yi - mu(i));
  }
  return 2.0 * d;
}

inline double deviance(Family f, const Eigen::VectorXd& y, const Eigen::VectorXd& mu) {
  return f == Family::gaussian ? (y - mu).squaredNorm() : poisson_deviance(y, mu);
}

inline Eigen::VectorXd inverse_link(Family f, const Eigen::VectorXd& eta) {
  return f == Family::gaussian ? eta : Eigen::VectorXd(eta.array().exp());
}

inline double poisson_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& mu) {
  double l = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    l += (y(i) > 0 ? y(i) * std::log(mu(i)) : 0.0) - mu(i) - std::lgamma(y(i) + 1.0);
  return l;
}

}  // namespace detail

/// Assembles the model's term blocks from the collection's attribute table.
/// `nb` is required when the spec has MRF terms; their grouping variable must
/// take exactly the structure's unit names as values.
inline Design build_design(const ModelSpec& spec, const AreaCollection& coll,
                           const NbStructure* nb = nullptr) {
  Design d;
  d.family = spec.family;
  d.formula = format_formula(spec);
  const auto n = static_cast<Eigen::Index>(coll.size());
  if (n == 0) throw InputError("cannot fit a model to an empty collection");

  d.y = detail::numeric_column(coll, spec.response);
  if (spec.family == Family::poisson)
    for (Eigen::Index i = 0; i < n; ++i)
      if (d.y(i) < 0 || d.y(i) != std::floor(d.y(i)))
        throw InputError("poisson response '" + spec.response + "' must be a non-negative integer (unit '" +
                         coll[static_cast<std::size_t>(i)].name + "')");

  d.offset = Eigen::VectorXd::Zero(n);
  if (spec.offset) {
    const auto v = detail::numeric_column(coll, spec.offset->variable);
    if (spec.offset->log) {
      for (Eigen::Index i = 0; i < n; ++i)
        if (!(v(i) > 0))
          throw InputError("offset(log(" + spec.offset->variable + ")) needs positive values; unit '" +
                           coll[static_cast<std::size_t>(i)].name + "' has " + std::to_string(v(i)));
      d.offset = v.array().log();
    } else {
      d.offset = v;
    }
  }

  TermBlock fixed;
  fixed.kind = TermKind::fixed;
  fixed.label = "parametric";
  fixed.columns.resize(n, static_cast<Eigen::Index>(spec.fixed.size()) + 1);
  fixed.columns.col(0).setOnes();
  fixed.col_labels.push_back("(Intercept)");
  for (std::size_t j = 0; j < spec.fixed.size(); ++j) {
    fixed.columns.col(static_cast<Eigen::Index>(j) + 1) = detail::numeric_column(coll, spec.fixed[j]);
    fixed.col_labels.push_back(spec.fixed[j]);
  }
  d.blocks.push_back(std::move(fixed));

  for (const auto& t : spec.smooths) {
    TermBlock b;
    b.kind = t.kind;
    b.term = t;
    b.label = term_label(t);
    const auto groups = detail::level_column(coll, t.group);
    Eigen::VectorXd scale = Eigen::VectorXd::Ones(n);
    if (t.is_slope()) scale = detail::numeric_column(coll, t.covariate);

    std::vector<Eigen::Index> row_level(static_cast<std::size_t>(n));
    if (t.is_mrf()) {
      if (!nb) throw FitError("term " + b.label + " needs a neighbourhood structure");
      b.levels = nb->names();
      std::map<std::string, Eigen::Index> pos;
      for (std::size_t l = 0; l < b.levels.size(); ++l) pos[b.levels[l]] = static_cast<Eigen::Index>(l);
      std::vector<std::string> extra, missing;
      std::vector<bool> seen(b.levels.size(), false);
      for (std::size_t i = 0; i < groups.size(); ++i) {
        auto it = pos.find(groups[i]);
        if (it == pos.end()) {
          extra.push_back(groups[i]);
          continue;
        }
        row_level[i] = it->second;
        seen[static_cast<std::size_t>(it->second)] = true;
      }
      for (std::size_t l = 0; l < seen.size(); ++l)
        if (!seen[l]) missing.push_back(b.levels[l]);
      if (!extra.empty() || !missing.empty())
        throw FitError("levels of '" + t.group + "' do not match the neighbourhood structure; not in structure: [" +
                       detail::join_names(extra) + "], absent from data: [" + detail::join_names(missing) + "]");
      PrecisionSpec prec = icar_precision(*nb);
      if (prec.components.size() > 1) {
        std::string comps;
        for (const auto& c : prec.components) {
          comps += " {";
          for (std::size_t k = 0; k < c.size(); ++k)
            comps += (k ? "," : "") + b.levels[static_cast<std::size_t>(c[k] - 1)];
          comps += "}";
        }
        d.warnings.push_back("term " + b.label + ": neighbourhood has " +
                             std::to_string(prec.components.size()) +
                             " components; each is centred separately:" + comps);
      }
      if (t.k) prec = rank_reduce(prec, *t.k);
      b.level_basis = prec.basis;
      b.penalty = prec.penalty;
    } else {
      std::map<std::string, Eigen::Index> pos;
      for (std::size_t i = 0; i < groups.size(); ++i) {
        auto [it, inserted] = pos.emplace(groups[i], static_cast<Eigen::Index>(b.levels.size()));
        if (inserted) b.levels.push_back(groups[i]);
        row_level[i] = it->second;
      }
      const auto L = static_cast<Eigen::Index>(b.levels.size());
      b.level_basis = Eigen::MatrixXd::Identity(L, L);
      b.penalty = Eigen::MatrixXd::Identity(L, L);
    }
    const Eigen::Index m = b.level_basis.cols();
    b.columns.resize(n, m);
    for (Eigen::Index i = 0; i < n; ++i)
      b.columns.row(i) = scale(i) * b.level_basis.row(row_level[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < m; ++j) b.col_labels.push_back(b.label + "." + std::to_string(j + 1));
    d.blocks.push_back(std::move(b));
  }
  return d;
}

struct FitOptions {
  double tol = 1e-8;  // relative change in penalized deviance
  int max_iter = 100;
  bool error_on_rank_deficiency = false;
};

struct BlockSummary {
  std::string label;
  TermKind kind = TermKind::fixed;
  Eigen::Index start = 0;
  Eigen::Index size = 0;
  double lambda = 0.0;
  double edf = 0.0;
  /// sigma_b^2 = scale / lambda_b; infinite when lambda is 0.
  double variance = 0.0;
};

/// Estimate and standard error per level of one penalized term.
struct TermPrediction {
  std::string column;  // e.g. "mrf.smooth.province"
  SmoothTerm term;
  std::vector<std::string> levels;
  std::vector<double> estimate;
  std::vector<double> se;
};

struct FitResult {
  Family family = Family::gaussian;
  std::string formula;
  Eigen::VectorXd beta;
  Eigen::MatrixXd cov;
  std::vector<std::string> coef_names;
  std::vector<double> lambda;  // one per penalized block
  std::vector<BlockSummary> blocks;  // blocks[0] = parametric part
  double edf_total = 0.0;
  double deviance = 0.0;
  double null_deviance = 0.0;
  double deviance_explained = 0.0;
  double aic = 0.0;
  double scale = 1.0;
  double reml = std::numeric_limits<double>::quiet_NaN();  // criterion at these lambdas
  Eigen::Index rank = 0;
  int iterations = 0;
  bool converged = false;
  Eigen::VectorXd linear_predictor;
  Eigen::VectorXd fitted;
  std::vector<double> penalized_deviance_trace;
  std::vector<TermPrediction> terms;
  std::vector<std::string> warnings;

  Eigen::VectorXd se() const { return cov.diagonal().cwiseMax(0.0).cwiseSqrt(); }
  Eigen::VectorXd block_coef(std::size_t b) const { return beta.segment(blocks[b].start, blocks[b].size); }
};

/// Deviance plus beta' S beta.
inline double penalized_deviance(const Design& d, const std::vector<double>& lambdas,
                                 const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = d.model_matrix() * beta + d.offset;
  const Eigen::VectorXd mu = detail::inverse_link(d.family, eta);
  return detail::deviance(d.family, d.y, mu) + beta.dot(d.total_penalty(lambdas) * beta);
}

inline std::vector<TermPrediction> term_predictions(const FitResult& fit, const Design& d) {
  std::vector<TermPrediction> out;
  for (std::size_t b = 1; b < d.blocks.size(); ++b) {
    const auto& blk = d.blocks[b];
    const auto& info = fit.blocks[b];
    TermPrediction tp;
    tp.column = prediction_column(blk.term);
    tp.term = blk.term;
    tp.levels = blk.levels;
    const Eigen::VectorXd coef = fit.beta.segment(info.start, info.size);
    const Eigen::MatrixXd V = fit.cov.block(info.start, info.start, info.size, info.size);
    for (Eigen::Index l = 0; l < blk.level_basis.rows(); ++l) {
      const Eigen::RowVectorXd row = blk.level_basis.row(l);
      tp.estimate.push_back(info.size ? row.dot(coef) : 0.0);
      tp.se.push_back(info.size ? std::sqrt(std::max(0.0, row.dot(V * row.transpose()))) : 0.0);
    }
    out.push_back(std::move(tp));
  }
  return out;
}

namespace detail {

inline double null_deviance(const Design& d) {
  const auto n = d.rows();
  Eigen::VectorXd mu(n);
  if (d.family == Family::gaussian) {
    mu = d.offset.array() + (d.y - d.offset).mean();
  } else {
    const double rate = d.y.sum() / d.offset.array().exp().sum();
    mu = d.offset.array().exp() * rate;
  }
  return deviance(d.family, d.y, mu);
}

inline std::string describe_null_space(const Design& d, const Eigen::MatrixXd& null_space) {
  std::vector<std::string> names;
  Eigen::Index c = 0;
  for (const auto& blk : d.blocks) {
    double weight = 0.0;
    if (null_space.cols() > 0)
      weight = null_space.middleRows(c, blk.width()).cwiseAbs().maxCoeff();
    if (blk.width() > 0 && weight > 0.1) names.push_back(blk.penalized() ? blk.label : "parametric terms");
    c += blk.width();
  }
  return join_names(names);
}

}  // namespace detail

/// Penalized IRLS with the smoothing parameters held fixed. Solves
/// (X'WX + S) beta = X'Wz with the family's working weights and response.
inline FitResult pirls_fit(const Design& d, const std::vector<double>& lambdas,
                           const FitOptions& opt = {}) {
  if (lambdas.size() != d.penalized_count())
    throw FitError("expected " + std::to_string(d.penalized_count()) + " smoothing parameters, got " +
                   std::to_string(lambdas.size()));
  for (double l : lambdas)
    if (!(l >= 0.0) || !std::isfinite(l)) throw FitError("smoothing parameters must be finite and non-negative");

  const Eigen::MatrixXd X = d.model_matrix();
  const Eigen::MatrixXd S = d.total_penalty(lambdas);
  const auto n = d.rows();
  const auto p = X.cols();

  FitResult r;
  r.family = d.family;
  r.formula = d.formula;
  r.lambda = lambdas;
  r.warnings = d.warnings;
  for (const auto& blk : d.blocks) r.coef_names.insert(r.coef_names.end(), blk.col_labels.begin(), blk.col_labels.end());

  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta, mu;
  detail::PenalizedSolve sol;

  auto pen_dev_at = [&](const Eigen::VectorXd& b, Eigen::VectorXd& eta_out, Eigen::VectorXd& mu_out) {
    eta_out = X * b + d.offset;
    mu_out = detail::inverse_link(d.family, eta_out);
    return detail::deviance(d.family, d.y, mu_out) + b.dot(S * b);
  };

  auto solve_step = [&](const Eigen::VectorXd& weights, const Eigen::VectorXd& z) {
    const Eigen::MatrixXd XtW = X.transpose() * weights.asDiagonal();
    sol = detail::penalized_solve(XtW * X + S);
    return Eigen::VectorXd(sol.inverse * (XtW * z));
  };

  if (d.family == Family::gaussian) {
    beta = solve_step(w, d.y - d.offset);
    r.penalized_deviance_trace.push_back(pen_dev_at(beta, eta, mu));
    r.iterations = 1;
    r.converged = true;
  } else {
    mu = d.y.array() + 0.1;
    eta = mu.array().log();
    double old_pdev = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= opt.max_iter; ++it) {
      w = mu;
      const Eigen::VectorXd z = (eta - d.offset).array() + (d.y - mu).array() / mu.array();
      Eigen::VectorXd cand = solve_step(w, z);
      Eigen::VectorXd eta_c, mu_c;
      double pdev = pen_dev_at(cand, eta_c, mu_c);
      // Step halving keeps the penalized deviance non-increasing.
      for (int half = 0; half < 40 && std::isfinite(old_pdev) && !(pdev <= old_pdev); ++half) {
        cand = 0.5 * (cand + beta);
        pdev = pen_dev_at(cand, eta_c, mu_c);
      }
      if (std::isfinite(old_pdev) && !(pdev <= old_pdev)) {
        // Halving found no decrease: the previous iterate is optimal to
        // working precision.
        r.iterations = it;
        r.converged = true;
        break;
      }
      beta = cand;
      eta = eta_c;
      mu = mu_c;
      r.penalized_deviance_trace.push_back(pdev);
      r.iterations = it;
      if (std::isfinite(old_pdev) && std::abs(old_pdev - pdev) < opt.tol * (std::abs(pdev) + 0.1)) {
        r.converged = true;
        break;
      }
      old_pdev = pdev;
    }
    if (!r.converged)
      r.warnings.push_back("penalized IRLS did not converge in " + std::to_string(opt.max_iter) + " iterations");
    // Final weights and system at the returned coefficients.
    w = mu;
    const Eigen::MatrixXd XtW = X.transpose() * w.asDiagonal();
    sol = detail::penalized_solve(XtW * X + S);
  }

  if (sol.rank < p) {
    const std::string who = detail::describe_null_space(d, sol.null_space);
    const std::string msg = "penalized system is rank deficient (rank " + std::to_string(sol.rank) + " of " +
                            std::to_string(p) + "); deficient block(s): " + who;
    if (opt.error_on_rank_deficiency) throw FitError(msg);
    r.warnings.push_back(msg + "; using a pseudo-inverse");
  }
  r.rank = sol.rank;
  r.beta = beta;
  r.linear_predictor = eta;
  r.fitted = mu;
  r.deviance = detail::deviance(d.family, d.y, mu);
  r.null_deviance = detail::null_deviance(d);
  r.deviance_explained = r.null_deviance > 0 ? 1.0 - r.deviance / r.null_deviance : 0.0;

  const Eigen::MatrixXd XtWX = X.transpose() * w.asDiagonal() * X;
  const Eigen::MatrixXd F = sol.inverse * XtWX;
  r.edf_total = F.trace();
  const double nd = static_cast<double>(n);
  if (d.family == Family::gaussian) {
    r.scale = nd - r.edf_total > 0 ? r.deviance / (nd - r.edf_total) : std::numeric_limits<double>::quiet_NaN();
    const double sigma2 = r.deviance / nd;
    r.aic = nd * std::log(2.0 * std::numbers::pi * sigma2) + nd + 2.0 + 2.0 * r.edf_total;
  } else {
    r.scale = 1.0;
    r.aic = -2.0 * detail::poisson_loglik(d.y, mu) + 2.0 * r.edf_total;
  }
  r.cov = sol.inverse * (std::isfinite(r.scale) ? r.scale : 0.0);

  Eigen::Index c = 0;
  for (std::size_t b = 0; b < d.blocks.size(); ++b) {
    BlockSummary s;
    s.label = d.blocks[b].label;
    s.kind = d.blocks[b].kind;
    s.start = c;
    s.size = d.blocks[b].width();
    s.lambda = b == 0 ? 0.0 : lambdas[b - 1];
    s.edf = F.diagonal().segment(c, s.size).sum();
    s.variance = s.lambda > 0 ? r.scale / s.lambda : std::numeric_limits<double>::infinity();
    r.blocks.push_back(s);
    c += s.size;
  }

  // Restricted likelihood (Laplace approximation for Poisson; exact with the
  // scale profiled out for Gaussian), as a quantity to minimize.
  double log_det_S = 0.0;
  double null_dim = static_cast<double>(d.blocks[0].width());
  bool all_positive = true;
  for (std::size_t b = 1; b < d.blocks.size(); ++b) {
    const auto m = d.blocks[b].width();
    if (m == 0) continue;
    if (!(lambdas[b - 1] > 0)) {
      all_positive = false;
      continue;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d.blocks[b].penalty, Eigen::EigenvaluesOnly);
    log_det_S += static_cast<double>(m) * std::log(lambdas[b - 1]) + es.eigenvalues().array().log().sum();
  }
  if (all_positive && sol.rank == p) {
    const double pen = beta.dot(S * beta);
    if (d.family == Family::gaussian) {
      const double dof = nd - null_dim;
      const double dp = r.deviance + pen;
      r.reml = dof * (1.0 + std::log(2.0 * std::numbers::pi * dp / dof)) + sol.log_det - log_det_S;
    } else {
      r.reml = -2.0 * detail::poisson_loglik(d.y, mu) + pen + sol.log_det - log_det_S -
               null_dim * std::log(2.0 * std::numbers::pi);
    }
  }
  r.terms = term_predictions(r, d);
  return r;
}

struct LambdaSearch {
  double log10_lo = -4.0;
  double log10_hi = 8.0;
  int sweeps = 3;
  double tol = 1e-3;  // on log10 lambda
  double start = 0.0;
};

/// Coordinate-wise golden-section search on log10(lambda) per penalized
/// block minimizing the restricted-likelihood criterion, then a final refit.
inline FitResult select_lambdas(const Design& d, const LambdaSearch& search = {},
                                const FitOptions& opt = {}) {
  const std::size_t nb = d.penalized_count();
  if (nb == 0) throw FitError("smoothing parameter selection needs at least one penalized term");
  std::vector<double> logl(nb, search.start);
  bool any_finite = false;

  auto criterion = [&](const std::vector<double>& ll) {
    std::vector<double> lam(nb);
    for (std::size_t b = 0; b < nb; ++b) lam[b] = std::pow(10.0, ll[b]);
    const double v = pirls_fit(d, lam, opt).reml;
    if (std::isfinite(v)) {
      any_finite = true;
      return v;
    }
    return std::numeric_limits<double>::infinity();
  };

  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double best = criterion(logl);
  for (int sweep = 0; sweep < search.sweeps; ++sweep) {
    for (std::size_t b = 0; b < nb; ++b) {
      if (d.blocks[b + 1].width() == 0) continue;
      auto at = [&](double x) {
        auto ll = logl;
        ll[b] = x;
        return criterion(ll);
      };
      double a = search.log10_lo, c = search.log10_hi;
      double x1 = c - g * (c - a), x2 = a + g * (c - a);
      double f1 = at(x1), f2 = at(x2);
      while (c - a > search.tol) {
        if (f1 <= f2) {
          c = x2;
          x2 = x1;
          f2 = f1;
          x1 = c - g * (c - a);
          f1 = at(x1);
        } else {
          a = x1;
          x1 = x2;
          f1 = f2;
          x2 = a + g * (c - a);
          f2 = at(x2);
        }
      }
      const double xm = f1 <= f2 ? x1 : x2;
      const double fm = std::min(f1, f2);
      if (fm <= best) {
        best = fm;
        logl[b] = xm;
      }
    }
  }
  if (!any_finite) throw FitError("restricted likelihood is non-finite over the whole lambda range");
  std::vector<double> lam(nb);
  for (std::size_t b = 0; b < nb; ++b) lam[b] = std::pow(10.0, logl[b]);
  return pirls_fit(d, lam, opt);
}

/// Fit summary, plus per-term predictions so later stages can attach them.
inline json fit_to_json(const FitResult& f) {
  json o = json::object();
  o["family"] = to_string(f.family);
  o["formula"] = f.formula;
  json coefs = json::array();
  const Eigen::VectorXd se = f.se();
  for (Eigen::Index i = 0; i < f.blocks[0].size; ++i) {
    json c = json::object();
    c["name"] = f.coef_names[static_cast<std::size_t>(i)];
    c["estimate"] = f.beta(i);
    c["se"] = se(i);
    coefs.push_back(c);
  }
  o["coefficients"] = coefs;
  json terms = json::array();
  for (std::size_t b = 1; b < f.blocks.size(); ++b) {
    json t = json::object();
    t["label"] = f.blocks[b].label;
    t["edf"] = f.blocks[b].edf;
    t["lambda"] = f.blocks[b].lambda;
    t["variance"] = std::isfinite(f.blocks[b].variance) ? json(f.blocks[b].variance) : json();
    terms.push_back(t);
  }
  o["terms"] = terms;
  o["deviance"] = f.deviance;
  o["null_deviance"] = f.null_deviance;
  o["deviance_explained"] = f.deviance_explained;
  o["aic"] = f.aic;
  o["edf_total"] = f.edf_total;
  o["scale"] = f.scale;
  o["reml"] = std::isfinite(f.reml) ? json(f.reml) : json();
  o["iterations"] = f.iterations;
  o["converged"] = f.converged;
  o["warnings"] = f.warnings;
  json preds = json::array();
  for (const auto& tp : f.terms) {
    json p = json::object();
    p["column"] = tp.column;
    p["kind"] = tp.term.is_mrf() ? (tp.term.is_slope() ? "mrf_slope" : "mrf_intercept")
                                 : (tp.term.is_slope() ? "re_slope" : "re_intercept");
    p["group"] = tp.term.group;
    p["covariate"] = tp.term.covariate;
    p["levels"] = tp.levels;
    p["estimate"] = tp.estimate;
    p["se"] = tp.se;
    preds.push_back(p);
  }
  o["predictions"] = preds;
  return o;
}

inline std::vector<TermPrediction> predictions_from_json(const json& o) {
  std::vector<TermPrediction> out;
  try {
    for (const auto& p : o.at("predictions")) {
      TermPrediction tp;
      tp.column = p.at("column").get<std::string>();
      const auto kind = p.at("kind").get<std::string>();
      if (kind == "re_intercept") tp.term.kind = TermKind::re_intercept;
      else if (kind == "re_slope") tp.term.kind = TermKind::re_slope;
      else if (kind == "mrf_intercept") tp.term.kind = TermKind::mrf_intercept;
      else if (kind == "mrf_slope") tp.term.kind = TermKind::mrf_slope;
      else throw InputError("unknown term kind '" + kind + "'");
      tp.term.group = p.at("group").get<std::string>();
      tp.term.covariate = p.value("covariate", "");
      tp.levels = p.at("levels").get<std::vector<std::string>>();
      tp.estimate = p.at("estimate").get<std::vector<double>>();
      tp.se = p.at("se").get<std::vector<double>>();
      if (tp.estimate.size() != tp.levels.size() || tp.se.size() != tp.levels.size())
        throw InputError("prediction '" + tp.column + "' has mismatched lengths");
      out.push_back(std::move(tp));
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed fit JSON: ") + e.what());
  }
  return out;
}

/// Builds the design and fits it: smoothing parameters are selected by the
/// restricted-likelihood search when the model has penalized terms.
inline FitResult fit_model(const ModelSpec& spec, const AreaCollection& coll, const NbStructure* nb = nullptr,
                           const FitOptions& opt = {}, const LambdaSearch& search = {}) {
  const Design d = build_design(spec, coll, nb);
  return d.penalized_count() ? select_lambdas(d, search, opt) : pirls_fit(d, {}, opt);
}

}  // namespace arelink
