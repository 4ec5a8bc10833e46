#include "dpfedrep/jl_classify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dpfedrep/dp_core.hpp"
#include "dpfedrep/error.hpp"
#include "dpfedrep/parallel.hpp"

namespace dpfedrep {

JLSketch sample_jl(Eigen::Index d, Eigen::Index k_prime, const RngKey& key) {
  if (k_prime < 1 || d < 1) throw Error(ErrorCode::InvalidArgument, "sketch dims must be >= 1");
  KeyedStream stream(key);
  const double scale = 1.0 / std::sqrt(double(k_prime));
  JLSketch sketch{Eigen::MatrixXd(k_prime, d)};
  for (Eigen::Index i = 0; i < k_prime; ++i)
    for (Eigen::Index j = 0; j < d; ++j) sketch.matrix(i, j) = stream.coin() ? scale : -scale;
  return sketch;
}

Eigen::Index jl_target_dim(double r, double Gamma, double rho, std::int64_t n, std::int64_t m, double beta,
                           double constant) {
  if (!(r > 0 && Gamma > 0 && rho > 0 && beta > 0 && beta < 1 && constant > 0) || n < 1 || m < 1)
    throw Error(ErrorCode::InvalidArgument, "bad JL target-dimension inputs");
  const double value = constant * r * r * Gamma * Gamma * std::log(double(n) * double(m) / beta) / (rho * rho);
  return std::max<Eigen::Index>(1, Eigen::Index(std::ceil(value)));
}

void MarginParams::validate() const {
  if (!(rho > 0)) throw Error(ErrorCode::InvalidArgument, "margin rho must be > 0");
  if (!(Gamma > 0)) throw Error(ErrorCode::InvalidArgument, "head bound Gamma must be > 0");
  if (!(r > 0)) throw Error(ErrorCode::InvalidArgument, "feature radius r must be > 0");
}

double margin_empirical_loss(const Eigen::MatrixXd& u_eff, const Eigen::VectorXd& v, const LabeledView& data,
                             double rho) {
  if (data.features.rows() == 0) return 0.0;
  const Eigen::VectorXd signed_scores = data.labels.cwiseProduct(data.features * (u_eff * v));
  return double((signed_scores.array() <= rho).count()) / double(signed_scores.size());
}

namespace {

// Strict ordering used for ties: smaller norm first, then lexicographic.
bool preferred(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.squaredNorm();
  const double nb = b.squaredNorm();
  if (na != nb) return na < nb;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (a(i) != b(i)) return a(i) < b(i);
  return false;
}

void consider(HeadFit& best, bool& have, Eigen::VectorXd v, double loss) {
  if (!have || loss < best.loss || (loss == best.loss && preferred(v, best.v))) {
    best.v = std::move(v);
    best.loss = loss;
    have = true;
  }
}

HeadFit solve_exact_1d(const Eigen::MatrixXd& u_eff, const LabeledView& data, double rho, double Gamma) {
  if (u_eff.cols() != 1) throw Error(ErrorCode::InvalidArgument, "Exact1D head solver needs k = 1");
  const Eigen::VectorXd a = data.labels.cwiseProduct(data.features * u_eff.col(0));
  // loss(v) only changes where a_j v = rho. The loss at a breakpoint is never
  // below that of an adjacent open cell, so cell midpoints and the ends suffice.
  std::vector<double> breaks{-Gamma, Gamma};
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    if (a(j) == 0.0) continue;
    const double bp = rho / a(j);
    if (bp > -Gamma && bp < Gamma) breaks.push_back(bp);
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  std::vector<double> points{-Gamma, 0.0, Gamma};
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) points.push_back(0.5 * (breaks[i] + breaks[i + 1]));

  HeadFit best;
  bool have = false;
  Eigen::VectorXd v(1);
  for (double p : points) {
    v(0) = p;
    consider(best, have, v, margin_empirical_loss(u_eff, v, data, rho));
  }
  return best;
}

HeadFit solve_grid(const Eigen::MatrixXd& u_eff, const LabeledView& data, double rho, double Gamma, int per_axis,
                   double feature_radius) {
  if (per_axis < 2) throw Error(ErrorCode::InvalidArgument, "grid search needs at least 2 points per axis");
  const Eigen::Index k = u_eff.cols();
  const double spacing = 2.0 * Gamma / double(per_axis - 1);
  const Eigen::MatrixXd projected = data.features * u_eff;  // m x k

  HeadFit best;
  bool have = false;
  std::vector<int> idx(std::size_t(k), 0);
  Eigen::VectorXd v(k);
  const double limit = Gamma * Gamma * (1.0 + 1e-12);
  for (;;) {
    for (Eigen::Index c = 0; c < k; ++c) v(c) = -Gamma + spacing * idx[std::size_t(c)];
    if (v.squaredNorm() <= limit) {
      const double loss =
          data.features.rows() == 0
              ? 0.0
              : double((data.labels.cwiseProduct(projected * v).array() <= rho).count()) / double(projected.rows());
      consider(best, have, v, loss);
    }
    std::size_t c = 0;
    while (c < idx.size() && ++idx[c] == per_axis) idx[c++] = 0;
    if (c == idx.size()) break;
  }
  best.resolution_too_coarse = spacing > rho / (2.0 * feature_radius * std::sqrt(double(k)));
  return best;
}

}  // namespace

HeadFit best_head_margin(const Eigen::MatrixXd& u_eff, const LabeledView& data, double rho, double Gamma,
                         const HeadSolver& solver, double feature_radius) {
  if (!(Gamma > 0)) throw Error(ErrorCode::InvalidArgument, "Gamma must be positive");
  if (data.features.cols() != u_eff.rows())
    throw Error(ErrorCode::DimensionMismatch, "feature dim differs from embedding rows");
  if (std::holds_alternative<Exact1D>(solver)) return solve_exact_1d(u_eff, data, rho, Gamma);
  return solve_grid(u_eff, data, rho, Gamma, std::get<GridSearch>(solver).points_per_axis, feature_radius);
}

// ---------------------------------------------------------------------------

double CoverSpec::ball_radius() const { return std::sqrt(2.0 * double(k)); }

void CoverSpec::validate() const {
  if (!(gamma_cover > 0 && gamma_cover <= 1)) throw Error(ErrorCode::InvalidArgument, "cover radius must lie in (0, 1]");
  if (k_prime < 1 || k < 1) throw Error(ErrorCode::InvalidArgument, "cover dims must be >= 1");
}

namespace {

struct LatticeGeometry {
  std::size_t dims;
  double spacing;
  long budget;  // max sum of squared integer coordinates
};

LatticeGeometry lattice_geometry(const CoverSpec& spec) {
  const auto dims = std::size_t(spec.k_prime * spec.k);
  const double spacing = spec.gamma_cover / std::sqrt(double(dims));
  const double ratio = spec.ball_radius() / spacing;
  return {dims, spacing, long(std::floor(ratio * ratio * (1.0 + 1e-12)))};
}

}  // namespace

std::size_t lattice_cardinality(const CoverSpec& spec) {
  spec.validate();
  const auto geo = lattice_geometry(spec);
  const std::size_t cap = spec.max_cardinality + 1;
  const auto budget = std::size_t(geo.budget);
  // count[s] = integer vectors over the dims processed so far with sum of squares s.
  std::vector<std::size_t> count(budget + 1, 0), next(budget + 1, 0);
  count[0] = 1;
  const auto max_coord = long(std::floor(std::sqrt(double(geo.budget))));
  for (std::size_t dim = 0; dim < geo.dims; ++dim) {
    std::fill(next.begin(), next.end(), 0);
    for (std::size_t s = 0; s <= budget; ++s) {
      if (!count[s]) continue;
      for (long z = -max_coord; z <= max_coord; ++z) {
        const std::size_t t = s + std::size_t(z * z);
        if (t > budget) continue;
        next[t] = std::min(cap, next[t] + count[s]);
      }
    }
    std::swap(count, next);
  }
  std::size_t total = 0;
  for (auto c : count) total = std::min(cap, total + c);
  return total;
}

Cover build_cover(const CoverSpec& spec) {
  spec.validate();
  Cover cover;
  if (const auto* net = std::get_if<RandomNetCover>(&spec.kind)) {
    cover.heuristic = true;
    KeyedStream stream(RngKey{spec.seed, 0, 0, Purpose::CoverNet});
    const Eigen::Index dims = spec.k_prime * spec.k;
    cover.elements.reserve(net->count);
    for (std::size_t i = 0; i < net->count; ++i) {
      const Eigen::VectorXd p = sample_ball(dims, spec.ball_radius(), stream);
      cover.elements.push_back(Eigen::Map<const Eigen::MatrixXd>(p.data(), spec.k_prime, spec.k));
    }
    return cover;
  }

  const std::size_t card = lattice_cardinality(spec);
  if (card > spec.max_cardinality)
    throw Error(ErrorCode::CoverTooLarge, "lattice cover would have more than " +
                                              std::to_string(spec.max_cardinality) +
                                              " elements; shrink k' or k, or grow gamma");
  const auto geo = lattice_geometry(spec);
  const auto max_coord = long(std::floor(std::sqrt(double(geo.budget))));
  cover.elements.reserve(card);
  std::vector<long> z(geo.dims, 0);
  // Depth-first over coordinates, pruning on the remaining squared budget.
  auto recurse = [&](auto&& self, std::size_t dim, long remaining) -> void {
    if (dim == geo.dims) {
      Eigen::MatrixXd element(spec.k_prime, spec.k);
      for (std::size_t i = 0; i < geo.dims; ++i) element.data()[i] = geo.spacing * double(z[i]);
      cover.elements.push_back(std::move(element));
      return;
    }
    for (long c = -max_coord; c <= max_coord; ++c) {
      if (c * c > remaining) continue;
      z[dim] = c;
      self(self, dim + 1, remaining - c * c);
    }
    z[dim] = 0;
  };
  recurse(recurse, 0, geo.budget);
  return cover;
}

// ---------------------------------------------------------------------------

double user_min_margin_loss(const Eigen::MatrixXd& u_eff, const LabeledView& sketched, const MarginParams& params,
                            const HeadSolver& solver) {
  return best_head_margin(u_eff, sketched, params.rho, params.Gamma, solver, params.r).loss;
}

double cover_score(const Eigen::MatrixXd& u_eff, std::span<const LabeledView> sketched_users,
                   const MarginParams& params, const HeadSolver& solver) {
  if (sketched_users.empty()) throw Error(ErrorCode::InvalidArgument, "score over no users");
  double total = 0.0;
  for (const auto& user : sketched_users) total += user_min_margin_loss(u_eff, user, params, solver);
  return -total / double(sketched_users.size());
}

std::vector<LabeledView> sketch_first_halves(const JLSketch& sketch, std::span<const BoundedClassDataset> datasets) {
  std::vector<LabeledView> out;
  out.reserve(datasets.size());
  for (const auto& ds : datasets) {
    if (ds.d() != sketch.source_dim()) throw Error(ErrorCode::DimensionMismatch, "dataset dim differs from sketch");
    out.push_back({sketch.apply_rows(ds.features.topRows(ds.split_index)), ds.labels.head(ds.split_index)});
  }
  return out;
}

Eigen::MatrixXd ClassifyResult::head_matrix() const {
  Eigen::MatrixXd out(Eigen::Index(heads.size()), u_priv.cols());
  for (std::size_t i = 0; i < heads.size(); ++i) out.row(Eigen::Index(i)) = heads[i].transpose();
  return out;
}

ClassifyResult private_classify(std::span<const BoundedClassDataset> datasets, const MarginParams& params,
                                double epsilon, const CoverSpec& cover_spec, const ClassifyOptions& options,
                                const RngKey& key) {
  params.validate();
  cover_spec.validate();
  if (datasets.empty()) throw Error(ErrorCode::InvalidArgument, "private_classify needs at least one user");
  if (cover_spec.k_prime != options.k_prime)
    throw Error(ErrorCode::DimensionMismatch, "cover k' differs from the sketch dimension");
  const Eigen::Index d = datasets.front().d();
  const double n = double(datasets.size());

  ClassifyResult result;
  result.sketch = sample_jl(d, options.k_prime, key.with_purpose(Purpose::JlSketch));
  const auto sketched = sketch_first_halves(result.sketch, datasets);
  const Cover cover = build_cover(cover_spec);
  if (cover.elements.empty()) throw Error(ErrorCode::EmptyCandidateSet, "cover is empty");

  std::vector<double> scores(cover.elements.size());
  parallel_for(scores.size(), options.threads, [&](std::size_t i) {
    scores[i] = cover_score(cover.elements[i], sketched, params, options.solver);
  });

  const std::size_t chosen = exponential_mechanism(scores, epsilon, 1.0 / n, key.with_purpose(Purpose::ExpMechanism));
  result.u_tilde = cover.elements[chosen];
  result.u_priv = result.sketch.matrix.transpose() * result.u_tilde;

  auto& rep = result.report;
  rep.cover_size = cover.elements.size();
  rep.heuristic_cover = cover.heuristic;
  rep.score_min = *std::min_element(scores.begin(), scores.end());
  rep.score_max = *std::max_element(scores.begin(), scores.end());
  rep.selected_index = chosen;
  rep.selected_score = scores[chosen];
  rep.selected_rank = std::size_t(std::count_if(scores.begin(), scores.end(),
                                                [&](double s) { return s > scores[chosen]; }));

  result.heads.resize(datasets.size());
  parallel_for(datasets.size(), options.threads, [&](std::size_t i) {
    const auto& ds = datasets[i];
    const Eigen::Index tail = ds.m() - ds.split_index;
    const LabeledView second{ds.features.bottomRows(tail), ds.labels.tail(tail)};
    result.heads[i] =
        best_head_margin(result.u_priv, second, options.head_rho, params.Gamma, options.solver, params.r).v;
  });
  return result;
}

}  // namespace dpfedrep
