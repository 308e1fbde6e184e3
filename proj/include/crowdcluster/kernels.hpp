#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "crowdcluster/aggregation.hpp"

// Data-parallel inner loops of the aggregation model. The OpenMP versions
// produce the same bits for any thread count: reductions run over a fixed
// number of blocks summed in block order, and gradients are gathered per
// object/worker over incidence lists in a fixed order. The serial namespace
// holds the straightforward loops the parallel ones are tested against.
namespace crowdcluster::kernels {

inline constexpr int kReductionBlocks = 64;

// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  return (z > 0 ? z : 0.0) + std::log1p(std::exp(-(z > 0 ? z : -z)));
}

// log P(label | z): -softplus(-z) for "same", -softplus(z) otherwise.
inline double pair_log_prob(double z, bool same) {
  return same ? -softplus(-z) : -softplus(z);
}

double pair_log_likelihood(const RowMatrix& embeddings, const Eigen::VectorXd& scale,
                           const Eigen::VectorXd& bias, const PairSet& pairs);

// Adds d(pair log-likelihood) into the gradient buffers (which must be sized
// and zeroed by the caller).
void pair_gradient(const RowMatrix& embeddings, const Eigen::VectorXd& scale,
                   const Eigen::VectorXd& bias, const PairSet& pairs,
                   RowMatrix& grad_embeddings, Eigen::VectorXd& grad_scale,
                   Eigen::VectorXd& grad_bias);

// r_ik proportional to pi_k N(x_i; mu_k, sigma^2 I), normalized with
// log-sum-exp. Resizes the output.
void responsibilities(const RowMatrix& embeddings, const RowMatrix& means,
                      const Eigen::VectorXd& weights, double sigma, RowMatrix& out);

// sum_i sum_k r_ik [log pi_k + log N(x_i; mu_k, sigma^2 I) - log r_ik].
double mixture_term(const RowMatrix& embeddings, const RowMatrix& means,
                    const Eigen::VectorXd& weights, const RowMatrix& resp, double sigma);

namespace serial {

double pair_log_likelihood(const RowMatrix& embeddings, const Eigen::VectorXd& scale,
                           const Eigen::VectorXd& bias, const PairSet& pairs);

void pair_gradient(const RowMatrix& embeddings, const Eigen::VectorXd& scale,
                   const Eigen::VectorXd& bias, const PairSet& pairs,
                   RowMatrix& grad_embeddings, Eigen::VectorXd& grad_scale,
                   Eigen::VectorXd& grad_bias);

void responsibilities(const RowMatrix& embeddings, const RowMatrix& means,
                      const Eigen::VectorXd& weights, double sigma, RowMatrix& out);

double mixture_term(const RowMatrix& embeddings, const RowMatrix& means,
                    const Eigen::VectorXd& weights, const RowMatrix& resp, double sigma);

}  // namespace serial

}  // namespace crowdcluster::kernels
