#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include <torch/torch.h>

namespace mred::eval {

/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}) over rows of [N,d] feature
/// matrices (raw, not normalized). Unbiased covariances; the matrix square root
/// is taken as (S_a^{1/2} S_b S_a^{1/2})^{1/2} through symmetric eigendecompositions
/// with negative eigenvalues clamped to 0. Throws for N < 2 or mismatched d.
double frechet_distance(const torch::Tensor& a, const torch::Tensor& b);

/// Cosine of each row pair of [N,d] x [N,d].
std::vector<double> paired_cosine(const torch::Tensor& a, const torch::Tensor& b);

/// Mean paired cosine.
double clip_score(const torch::Tensor& generated, const torch::Tensor& targets);

/// Percentage of queries whose ground-truth gallery row is among the k best by
/// cosine; ties are ranked by gallery index.
double recall_at_k(const torch::Tensor& queries, const torch::Tensor& gallery, const std::vector<int64_t>& gt, int k);
/// Zero-based rank of each query's ground-truth row (cosine, ties by gallery index).
std::vector<int64_t> retrieval_ranks(const torch::Tensor& queries, const torch::Tensor& gallery,
                                     const std::vector<int64_t>& gt);
std::map<int, double> recall_at(const torch::Tensor& queries, const torch::Tensor& gallery,
                                const std::vector<int64_t>& gt, const std::vector<int>& ks);

/// Percentile bootstrap of the mean.
struct BootstrapInterval {
  double mean = 0.0;
  double lower = 0.0;  // 5th percentile of resampled means
  double upper = 0.0;  // 95th percentile
};
BootstrapInterval bootstrap_mean(const std::vector<double>& values, int resamples, std::uint64_t seed);

}  // namespace mred::eval
