#include "coactivity/gp.hpp"

#include "coactivity/errors.hpp"
#include "coactivity/stats.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace coact {

namespace {

// Cholesky of a (possibly ill-conditioned) SPD matrix with jitter escalation.
Eigen::LLT<Eigen::MatrixXd> robust_llt(const Eigen::MatrixXd& a, double scale) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() == Eigen::Success) return llt;
  for (double rel = 1e-9; rel <= 1e-3 * (1 + 1e-12); rel *= 10.0) {
    Eigen::MatrixXd j = a;
    j.diagonal().array() += rel * scale;
    llt.compute(j);
    if (llt.info() == Eigen::Success) return llt;
  }
  throw NumericalError("Cholesky failed after jitter escalation (n=" +
                       std::to_string(a.rows()) + ")");
}

void symmetrize(Eigen::MatrixXd& m) { m = 0.5 * (m + m.transpose()).eval(); }

// Shared evaluation of the per-coordinate MVN log density for many draws.
class DensityEvaluator {
 public:
  DensityEvaluator(const GpPosterior& post)
      : post_(post), llt_(robust_llt(post.covariance(), post.signal_var())) {
    const auto& l = llt_.matrixL();
    log_det_ = 0.0;
    for (Eigen::Index i = 0; i < post.dim(); ++i) {
      log_det_ += 2.0 * std::log(l(i, i));
    }
  }

  double operator()(const Eigen::MatrixX2d& draw) const {
    if (draw.rows() != post_.dim()) {
      throw ContractError("log_density: draw has " + std::to_string(draw.rows()) +
                          " rows, posterior has " + std::to_string(post_.dim()));
    }
    const Eigen::MatrixX2d centered = draw - post_.mean();
    const Eigen::MatrixX2d w = llt_.matrixL().solve(centered);
    const double k = static_cast<double>(post_.dim());
    double total = 0.0;
    for (int c = 0; c < 2; ++c) {
      total += -0.5 * (w.col(c).squaredNorm() + log_det_ + k * stats::kLog2Pi);
    }
    return total;
  }

 private:
  const GpPosterior& post_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double log_det_ = 0.0;
};

}  // namespace

void GpHyperParams::validate() const {
  if (!(length_scale_s > 0.0)) throw ConfigError("GP length_scale must be > 0");
  if (!(signal_std_m > 0.0)) throw ConfigError("GP signal_std must be > 0");
  if (!(jitter >= 0.0)) throw ConfigError("GP jitter must be >= 0");
  if (!mean.allFinite()) throw ConfigError("GP mean must be finite");
}

double GpHyperParams::covariance(double dt) const {
  const double s2 = signal_std_m * signal_std_m;
  const double r = std::abs(dt) / length_scale_s;
  switch (kernel) {
    case KernelKind::kSquaredExponential:
      return s2 * std::exp(-0.5 * r * r);
    case KernelKind::kMatern52: {
      const double a = std::sqrt(5.0) * r;
      return s2 * (1.0 + a + a * a / 3.0) * std::exp(-a);
    }
  }
  return 0.0;
}

void TimeGrid::validate() const {
  if (!(t_end > t_start)) throw ConfigError("time grid needs t_end > t_start");
  if (n_points < 2) throw ConfigError("time grid needs at least 2 points");
}

std::pair<int, double> TimeGrid::locate(double t) const {
  const double u = (std::clamp(t, t_start, t_end) - t_start) / step();
  int i = static_cast<int>(std::floor(u));
  i = std::clamp(i, 0, n_points - 2);
  return {i, std::clamp(u - i, 0.0, 1.0)};
}

std::pair<int, int> TimeGrid::index_range(double t0, double t1) const {
  const double h = step();
  const double eps = 1e-9 * h;
  int lo = static_cast<int>(std::ceil((t0 - t_start) / h - eps / h));
  int hi = static_cast<int>(std::floor((t1 - t_start) / h + eps / h));
  lo = std::max(lo, 0);
  hi = std::min(hi, n_points - 1);
  return {lo, hi};
}

std::vector<std::pair<int, double>> TimeGrid::span_quadrature(double t0, double t1) const {
  std::vector<std::pair<int, double>> nodes;
  const double len = t1 - t0;
  if (!(len > 0.0)) return nodes;
  auto [lo, hi] = index_range(t0, t1);
  if (hi >= lo) {
    const double w = len / (hi - lo + 1);
    nodes.reserve(static_cast<std::size_t>(hi - lo + 1));
    for (int i = lo; i <= hi; ++i) nodes.emplace_back(i, w);
  } else {
    const double mid = 0.5 * (t0 + t1);
    int i = static_cast<int>(std::lround((mid - t_start) / step()));
    nodes.emplace_back(std::clamp(i, 0, n_points - 1), len);
  }
  return nodes;
}

GpPosterior::GpPosterior(std::vector<ActorId> actors, TimeGrid grid,
                         Eigen::MatrixX2d mean, Eigen::MatrixXd covariance,
                         std::vector<GpsObservation> source_obs, double signal_var)
    : actors_(std::move(actors)),
      grid_(grid),
      mean_(std::move(mean)),
      cov_(std::move(covariance)),
      source_obs_(std::move(source_obs)),
      signal_var_(signal_var) {
  const auto n = static_cast<Eigen::Index>(actors_.size()) * grid_.n_points;
  if (mean_.rows() != n || cov_.rows() != n || cov_.cols() != n) {
    throw ContractError("GpPosterior: inconsistent dimensions");
  }
}

int GpPosterior::block_of(ActorId actor) const {
  for (std::size_t k = 0; k < actors_.size(); ++k) {
    if (actors_[k] == actor) return static_cast<int>(k) * grid_.n_points;
  }
  throw ContractError("actor " + std::to_string(actor.value) + " not in posterior");
}

GpPosterior GpPosterior::marginal(ActorId actor) const {
  const int off = block_of(actor);
  const int n = grid_.n_points;
  std::vector<GpsObservation> obs;
  for (const auto& o : source_obs_) {
    if (o.actor == actor) obs.push_back(o);
  }
  return GpPosterior({actor}, grid_, mean_.middleRows(off, n),
                     cov_.block(off, off, n, n), std::move(obs), signal_var_);
}

GpPosterior build_gp(ActorId actor, std::span<const GpsObservation> obs,
                     const GpHyperParams& hyper, const TimeGrid& grid) {
  hyper.validate();
  grid.validate();
  for (const auto& o : obs) {
    if (o.actor != actor) throw ContractError("build_gp: observations of several actors");
    if (!(o.noise_std > 0.0)) throw ConfigError("GPS noise_std must be > 0");
    if (!std::isfinite(o.t) || !o.pos.allFinite()) {
      throw ContractError("build_gp: non-finite observation");
    }
  }
  const int n = grid.n_points;
  const double s2 = hyper.signal_std_m * hyper.signal_std_m;

  Eigen::MatrixXd kgg(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      kgg(i, j) = kgg(j, i) = hyper.covariance(grid.at(i) - grid.at(j));
    }
  }
  kgg.diagonal().array() += hyper.jitter * s2;

  Eigen::MatrixX2d mean(n, 2);
  mean.rowwise() = hyper.mean.transpose();
  std::vector<GpsObservation> source(obs.begin(), obs.end());
  if (obs.empty()) {
    return GpPosterior({actor}, grid, std::move(mean), std::move(kgg), {}, s2);
  }

  const auto m = static_cast<Eigen::Index>(obs.size());
  Eigen::MatrixXd koo(m, m);
  Eigen::MatrixXd kog(m, n);
  Eigen::MatrixX2d resid(m, 2);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = a; b < m; ++b) {
      koo(a, b) = koo(b, a) = hyper.covariance(obs[a].t - obs[b].t);
    }
    koo(a, a) += obs[a].noise_std * obs[a].noise_std;
    for (int i = 0; i < n; ++i) kog(a, i) = hyper.covariance(obs[a].t - grid.at(i));
    resid.row(a) = (obs[a].pos - hyper.mean).transpose();
  }

  const auto llt = robust_llt(koo, s2);
  const Eigen::MatrixXd v = llt.matrixL().solve(kog);
  const Eigen::MatrixX2d w = llt.matrixL().solve(resid);
  mean += v.transpose() * w;
  Eigen::MatrixXd cov = kgg;
  cov.noalias() -= v.transpose() * v;
  symmetrize(cov);
  return GpPosterior({actor}, grid, std::move(mean), std::move(cov), std::move(source), s2);
}

Eigen::MatrixXd sampling_factor(const Eigen::MatrixXd& cov, double scale) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  if (ldlt.info() == Eigen::Success) {
    Eigen::VectorXd d = ldlt.vectorD();
    const double tol = 1e-9 * std::max(scale, d.cwiseAbs().maxCoeff());
    if (d.allFinite() && d.minCoeff() >= -tol) {
      d = d.cwiseMax(0.0).cwiseSqrt();
      Eigen::MatrixXd l = ldlt.matrixL();
      Eigen::MatrixXd f = l * d.asDiagonal();
      return ldlt.transpositionsP().transpose() * f;
    }
  }
  const auto llt = robust_llt(cov, scale);
  return llt.matrixL();
}

TrajectoryEnsemble sample_trajectories(const GpPosterior& post, int n_draws,
                                       std::uint64_t seed) {
  if (n_draws < 1) throw ContractError("sample_trajectories: n_draws must be >= 1");
  const Eigen::MatrixXd f = sampling_factor(post.covariance(), post.signal_var());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  TrajectoryEnsemble ens;
  ens.seed = seed;
  ens.draws.reserve(static_cast<std::size_t>(n_draws));
  const Eigen::Index n = post.dim();
  Eigen::MatrixX2d z(n, 2);
  for (int d = 0; d < n_draws; ++d) {
    for (Eigen::Index i = 0; i < n; ++i) {
      z(i, 0) = normal(rng);
      z(i, 1) = normal(rng);
    }
    ens.draws.emplace_back(post.mean() + f * z);
  }
  DensityEvaluator eval(post);
  ens.log_density.reserve(ens.draws.size());
  for (const auto& d : ens.draws) ens.log_density.push_back(eval(d));
  return ens;
}

double log_density(const GpPosterior& post, const Eigen::MatrixX2d& draw) {
  if (draw.rows() != post.dim()) {
    throw ContractError("log_density: dimension mismatch");
  }
  return DensityEvaluator(post)(draw);
}

GpPosterior stack_posteriors(std::span<const GpPosterior* const> parts) {
  if (parts.empty()) throw ContractError("stack_posteriors: nothing to stack");
  const TimeGrid grid = parts.front()->grid();
  Eigen::Index total = 0;
  double signal_var = 0.0;
  for (const auto* p : parts) {
    if (!(p->grid() == grid)) throw ContractError("stack_posteriors: grids differ");
    total += p->dim();
    signal_var = std::max(signal_var, p->signal_var());
  }
  std::vector<ActorId> actors;
  std::vector<GpsObservation> obs;
  Eigen::MatrixX2d mean(total, 2);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(total, total);
  Eigen::Index off = 0;
  for (const auto* p : parts) {
    const Eigen::Index n = p->dim();
    mean.middleRows(off, n) = p->mean();
    cov.block(off, off, n, n) = p->covariance();
    actors.insert(actors.end(), p->actors().begin(), p->actors().end());
    obs.insert(obs.end(), p->source_obs().begin(), p->source_obs().end());
    off += n;
  }
  return GpPosterior(std::move(actors), grid, std::move(mean), std::move(cov),
                     std::move(obs), signal_var);
}

AuxObservationSet make_aux_observations(const GpPosterior& joint,
                                        const ActivityInstance& activity,
                                        std::size_t activity_ref, AuxMode mode,
                                        double sigma_aux_m) {
  if (!(sigma_aux_m > 0.0)) throw ConfigError("sigma_aux must be > 0");
  AuxObservationSet set;
  set.mode = mode;
  set.activity_ref = activity_ref;
  set.sigma_aux_m = sigma_aux_m;

  const TimeGrid& grid = joint.grid();
  auto [lo, hi] = grid.index_range(activity.start, activity.end());
  if (hi < lo) return set;

  std::vector<int> blocks;
  blocks.reserve(activity.participants.size());
  for (ActorId p : activity.participants) blocks.push_back(joint.block_of(p));

  if (mode == AuxMode::kDynamic) {
    for (std::size_t a = 0; a < blocks.size(); ++a) {
      for (std::size_t b = a + 1; b < blocks.size(); ++b) {
        for (int i = lo; i <= hi; ++i) {
          set.constraints.push_back({{{blocks[a] + i, 1.0}, {blocks[b] + i, -1.0}}});
        }
      }
    }
    return set;
  }

  // x_p(t) minus the participants' common time-averaged location.
  const int n_in = hi - lo + 1;
  const double w = 1.0 / (static_cast<double>(blocks.size()) * n_in);
  for (int self : blocks) {
    for (int i = lo; i <= hi; ++i) {
      LinearConstraint row;
      row.coeffs.reserve(blocks.size() * static_cast<std::size_t>(n_in));
      for (int other : blocks) {
        for (int j = lo; j <= hi; ++j) {
          const int idx = other + j;
          row.coeffs.emplace_back(idx, idx == self + i ? 1.0 - w : -w);
        }
      }
      set.constraints.push_back(std::move(row));
    }
  }
  return set;
}

GpPosterior condition_on_constraints(const GpPosterior& prior,
                                     std::span<const AuxObservationSet> sets) {
  Eigen::Index m = 0;
  for (const auto& s : sets) m += static_cast<Eigen::Index>(s.constraints.size());
  if (m == 0) return prior;

  const Eigen::Index n = prior.dim();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m, n);
  Eigen::VectorXd noise_var(m);
  Eigen::Index r = 0;
  for (const auto& s : sets) {
    const double v = s.sigma_aux_m * s.sigma_aux_m;
    for (const auto& row : s.constraints) {
      for (const auto& [idx, c] : row.coeffs) {
        if (idx < 0 || idx >= n) throw ContractError("constraint index out of range");
        h(r, idx) += c;
      }
      noise_var(r) = v;
      ++r;
    }
  }

  // More rows than state dimensions: replace (H, D) by an equivalent
  // unit-noise observation of rank <= n, G = H^T D^-1 H = V L V^T.
  if (m > n) {
    const Eigen::MatrixXd g = h.transpose() * noise_var.cwiseInverse().asDiagonal() * h;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
    if (eig.info() != Eigen::Success) throw NumericalError("auxiliary conditioning: eigensolver failed");
    const Eigen::VectorXd& lambda = eig.eigenvalues();
    const double cutoff = 1e-14 * std::max(lambda.maxCoeff(), 0.0);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (lambda(k) > cutoff) keep.push_back(k);
    }
    Eigen::MatrixXd hc(static_cast<Eigen::Index>(keep.size()), n);
    for (std::size_t k = 0; k < keep.size(); ++k) {
      hc.row(static_cast<Eigen::Index>(k)) = std::sqrt(lambda(keep[k])) * eig.eigenvectors().col(keep[k]).transpose();
    }
    h = std::move(hc);
    noise_var = Eigen::VectorXd::Ones(h.rows());
  }

  const Eigen::MatrixXd& cov = prior.covariance();
  const Eigen::MatrixXd hs = h * cov;  // m x n
  Eigen::MatrixXd s = hs * h.transpose();
  s.diagonal() += noise_var;
  symmetrize(s);
  const Eigen::MatrixX2d innov = h * prior.mean();

  Eigen::MatrixXd gain_t;  // S^{-1} H Sigma
  Eigen::MatrixX2d w;
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() == Eigen::Success) {
    gain_t = llt.solve(hs);
    w = llt.solve(innov);
  } else {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
    if (ldlt.info() != Eigen::Success) {
      throw NumericalError("auxiliary conditioning: innovation covariance not factorizable");
    }
    gain_t = ldlt.solve(hs);
    w = ldlt.solve(innov);
  }

  Eigen::MatrixX2d mean = prior.mean() - hs.transpose() * w;
  Eigen::MatrixXd post_cov = cov;
  post_cov.noalias() -= hs.transpose() * gain_t;
  symmetrize(post_cov);
  return GpPosterior(prior.actors(), prior.grid(), std::move(mean), std::move(post_cov),
                     prior.source_obs(), prior.signal_var());
}

ConditionedPosterior condition_on_activity(std::span<const GpPosterior> posteriors,
                                           const ActivityInstance& activity,
                                           AuxMode mode, double sigma_aux_m) {
  if (activity.participants.size() < 2) {
    throw ContractError("condition_on_activity: fewer than 2 participants");
  }
  std::vector<const GpPosterior*> parts;
  for (ActorId p : activity.participants) {
    const GpPosterior* found = nullptr;
    for (const auto& post : posteriors) {
      if (post.actors().size() == 1 && post.actors().front() == p) found = &post;
    }
    if (!found) {
      throw ContractError("condition_on_activity: no posterior for participant " +
                          std::to_string(p.value));
    }
    parts.push_back(found);
  }
  GpPosterior joint = stack_posteriors(parts);
  AuxObservationSet aux = make_aux_observations(joint, activity, 0, mode, sigma_aux_m);
  if (aux.constraints.empty()) return {std::move(joint), true};
  GpPosterior conditioned = condition_on_constraints(joint, std::span(&aux, 1));
  return {std::move(conditioned), false};
}

}  // namespace coact
