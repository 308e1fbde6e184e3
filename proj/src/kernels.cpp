#include "crowdcluster/kernels.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace crowdcluster::kernels {

namespace {

double stable_logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double residual(double z, bool same) { return (same ? 1.0 : 0.0) - stable_logistic(z); }

// Sum of term(i) for i in [0, count), split into kReductionBlocks contiguous
// blocks whose partial sums are added in block order.
template <typename Term>
double block_sum(std::size_t count, const Term& term) {
  std::vector<double> partial(kReductionBlocks, 0.0);
  const auto blocks = static_cast<long>(kReductionBlocks);
#pragma omp parallel for schedule(static)
  for (long b = 0; b < blocks; ++b) {
    const std::size_t begin = count * static_cast<std::size_t>(b) / kReductionBlocks;
    const std::size_t end = count * static_cast<std::size_t>(b + 1) / kReductionBlocks;
    double acc = 0.0;
    for (std::size_t i = begin; i < end; ++i) acc += term(i);
    partial[static_cast<std::size_t>(b)] = acc;
  }
  double total = 0.0;
  for (double v : partial) total += v;
  return total;
}

double log_normal_const(int dim, double sigma) {
  return -0.5 * dim * std::log(2.0 * std::numbers::pi * sigma * sigma);
}

double mixture_row(const RowMatrix& embeddings, const RowMatrix& means,
                   const Eigen::VectorXd& weights, const RowMatrix& resp, double sigma,
                   Eigen::Index i) {
  const double inv_two_var = 0.5 / (sigma * sigma);
  const double norm = log_normal_const(static_cast<int>(embeddings.cols()), sigma);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < means.rows(); ++k) {
    const double r = resp(i, k);
    if (r <= 0.0) continue;
    const double sq = (embeddings.row(i) - means.row(k)).squaredNorm();
    acc += r * (std::log(weights(k)) + norm - sq * inv_two_var - std::log(r));
  }
  return acc;
}

void responsibility_row(const RowMatrix& embeddings, const RowMatrix& means,
                        const Eigen::VectorXd& weights, double sigma, RowMatrix& out,
                        Eigen::Index i) {
  const double inv_two_var = 0.5 / (sigma * sigma);
  const Eigen::Index k_count = means.rows();
  double peak = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const double logit =
        std::log(weights(k)) - (embeddings.row(i) - means.row(k)).squaredNorm() * inv_two_var;
    out(i, k) = logit;
    if (logit > peak) peak = logit;
  }
  double total = 0.0;
  for (Eigen::Index k = 0; k < k_count; ++k) {
    out(i, k) = std::exp(out(i, k) - peak);
    total += out(i, k);
  }
  out.row(i) /= total;
}

}  // namespace

double pair_log_likelihood(const RowMatrix& embeddings, const Eigen::VectorXd& scale,
                           const Eigen::VectorXd& bias, const PairSet& pairs) {
  const auto& list = pairs.pairs();
  return block_sum(list.size(), [&](std::size_t p) {
    const IndexedPair& pair = list[p];
    const double z = scale(pair.worker) * embeddings.row(pair.a).dot(embeddings.row(pair.b)) +
                     bias(pair.worker);
    return pair_log_prob(z, pair.same);
  });
}

void pair_gradient(const RowMatrix& embeddings, const Eigen::VectorXd& scale,
                   const Eigen::VectorXd& bias, const PairSet& pairs,
                   RowMatrix& grad_embeddings, Eigen::VectorXd& grad_scale,
                   Eigen::VectorXd& grad_bias) {
  const auto& list = pairs.pairs();
  const auto count = static_cast<long>(list.size());
  std::vector<double> dots(list.size());
  std::vector<double> resid(list.size());
  std::vector<double> coef(list.size());  // resid * scale, the embedding-gradient weight
#pragma omp parallel for schedule(static)
  for (long p = 0; p < count; ++p) {
    const auto q = static_cast<std::size_t>(p);
    const IndexedPair& pair = list[q];
    const double dot = embeddings.row(pair.a).dot(embeddings.row(pair.b));
    const double s = scale(pair.worker);
    dots[q] = dot;
    resid[q] = residual(s * dot + bias(pair.worker), pair.same);
    coef[q] = resid[q] * s;
  }

  const auto& obj_off = pairs.object_offsets();
  const auto& obj_pairs = pairs.object_pairs();
  const auto& neighbors = pairs.object_neighbors();
  const auto n = static_cast<long>(pairs.n_objects());
  const Eigen::Index d = embeddings.cols();
  const double* x = embeddings.data();
  double* g = grad_embeddings.data();
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    double* gi = g + i * d;
    for (std::size_t e = obj_off[static_cast<std::size_t>(i)];
         e < obj_off[static_cast<std::size_t>(i) + 1]; ++e) {
      const double c = coef[obj_pairs[e]];
      const double* xo = x + static_cast<Eigen::Index>(neighbors[e]) * d;
      for (Eigen::Index k = 0; k < d; ++k) gi[k] += c * xo[k];
    }
  }

  const auto& w_off = pairs.worker_offsets();
  const auto& w_pairs = pairs.worker_pairs();
  const auto w = static_cast<long>(pairs.n_workers());
#pragma omp parallel for schedule(static)
  for (long j = 0; j < w; ++j) {
    double gs = 0.0;
    double gt = 0.0;
    for (std::size_t e = w_off[static_cast<std::size_t>(j)];
         e < w_off[static_cast<std::size_t>(j) + 1]; ++e) {
      const std::uint32_t p = w_pairs[e];
      gs += resid[p] * dots[p];
      gt += resid[p];
    }
    grad_scale(j) += gs;
    grad_bias(j) += gt;
  }
}

void responsibilities(const RowMatrix& embeddings, const RowMatrix& means,
                      const Eigen::VectorXd& weights, double sigma, RowMatrix& out) {
  out.resize(embeddings.rows(), means.rows());
  const auto n = static_cast<long>(embeddings.rows());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) responsibility_row(embeddings, means, weights, sigma, out, i);
}

double mixture_term(const RowMatrix& embeddings, const RowMatrix& means,
                    const Eigen::VectorXd& weights, const RowMatrix& resp, double sigma) {
  return block_sum(static_cast<std::size_t>(embeddings.rows()), [&](std::size_t i) {
    return mixture_row(embeddings, means, weights, resp, sigma, static_cast<Eigen::Index>(i));
  });
}

namespace serial {

double pair_log_likelihood(const RowMatrix& embeddings, const Eigen::VectorXd& scale,
                           const Eigen::VectorXd& bias, const PairSet& pairs) {
  double total = 0.0;
  for (const IndexedPair& pair : pairs.pairs()) {
    const double z = scale(pair.worker) * embeddings.row(pair.a).dot(embeddings.row(pair.b)) +
                     bias(pair.worker);
    total += pair_log_prob(z, pair.same);
  }
  return total;
}

void pair_gradient(const RowMatrix& embeddings, const Eigen::VectorXd& scale,
                   const Eigen::VectorXd& bias, const PairSet& pairs,
                   RowMatrix& grad_embeddings, Eigen::VectorXd& grad_scale,
                   Eigen::VectorXd& grad_bias) {
  for (const IndexedPair& pair : pairs.pairs()) {
    const double dot = embeddings.row(pair.a).dot(embeddings.row(pair.b));
    const double e = residual(scale(pair.worker) * dot + bias(pair.worker), pair.same);
    const double s = scale(pair.worker);
    grad_embeddings.row(pair.a) += (e * s) * embeddings.row(pair.b);
    grad_embeddings.row(pair.b) += (e * s) * embeddings.row(pair.a);
    grad_scale(pair.worker) += e * dot;
    grad_bias(pair.worker) += e;
  }
}

void responsibilities(const RowMatrix& embeddings, const RowMatrix& means,
                      const Eigen::VectorXd& weights, double sigma, RowMatrix& out) {
  out.resize(embeddings.rows(), means.rows());
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i)
    responsibility_row(embeddings, means, weights, sigma, out, i);
}

double mixture_term(const RowMatrix& embeddings, const RowMatrix& means,
                    const Eigen::VectorXd& weights, const RowMatrix& resp, double sigma) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i)
    total += mixture_row(embeddings, means, weights, resp, sigma, i);
  return total;
}

}  // namespace serial

}  // namespace crowdcluster::kernels
