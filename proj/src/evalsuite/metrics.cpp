#include "mred/evalsuite/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <numeric>
#include <random>

#include "mred/common/error.hpp"

namespace mred::eval {

namespace {

Eigen::MatrixXd to_eigen(const torch::Tensor& t) {
  auto c = t.to(torch::kFloat64).contiguous();
  Eigen::MatrixXd m(c.size(0), c.size(1));
  auto acc = c.accessor<double, 2>();
  for (int64_t i = 0; i < c.size(0); ++i)
    for (int64_t j = 0; j < c.size(1); ++j) m(i, j) = acc[i][j];
  return m;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

torch::Tensor unit_rows(const torch::Tensor& t) {
  auto d = t.to(torch::kFloat64);
  return d / d.norm(2, 1, true).clamp_min(1e-12);
}

}  // namespace

double frechet_distance(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.dim() != 2 || b.dim() != 2 || a.size(1) != b.size(1)) throw Error("frechet_distance: need [N,d] x [M,d]");
  if (a.size(0) < 2 || b.size(0) < 2) throw Error("frechet_distance: need at least 2 rows per set");
  const auto A = to_eigen(a), B = to_eigen(b);
  const Eigen::RowVectorXd mu_a = A.colwise().mean(), mu_b = B.colwise().mean();
  const Eigen::MatrixXd ca = A.rowwise() - mu_a, cb = B.rowwise() - mu_b;
  const Eigen::MatrixXd sa = (ca.transpose() * ca) / static_cast<double>(A.rows() - 1);
  const Eigen::MatrixXd sb = (cb.transpose() * cb) / static_cast<double>(B.rows() - 1);
  const Eigen::MatrixXd ra = psd_sqrt(sa);
  Eigen::MatrixXd inner = ra * sb * ra;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner, Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (mu_a - mu_b).squaredNorm() + sa.trace() + sb.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, d);
}

std::vector<double> paired_cosine(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes() || a.dim() != 2) throw Error("paired_cosine: need two [N,d] tensors");
  auto c = (unit_rows(a) * unit_rows(b)).sum(1).contiguous();
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

double clip_score(const torch::Tensor& generated, const torch::Tensor& targets) {
  const auto c = paired_cosine(generated, targets);
  if (c.empty()) throw Error("clip_score: empty input");
  return std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(c.size());
}

std::vector<int64_t> retrieval_ranks(const torch::Tensor& queries, const torch::Tensor& gallery,
                                     const std::vector<int64_t>& gt) {
  if (queries.size(0) != static_cast<int64_t>(gt.size())) throw Error("recall: one ground truth per query");
  if (queries.size(0) == 0) throw Error("recall: no queries");
  const auto sims = torch::matmul(unit_rows(queries), unit_rows(gallery).t()).contiguous();
  auto acc = sims.accessor<double, 2>();
  const int64_t n = gallery.size(0);
  std::vector<int64_t> ranks;
  for (int64_t q = 0; q < sims.size(0); ++q) {
    const int64_t g = gt[q];
    if (g < 0 || g >= n) throw Error("recall: ground-truth index out of range");
    int64_t rank = 0;
    for (int64_t j = 0; j < n; ++j)
      if (acc[q][j] > acc[q][g] || (acc[q][j] == acc[q][g] && j < g)) ++rank;
    ranks.push_back(rank);
  }
  return ranks;
}

std::map<int, double> recall_at(const torch::Tensor& queries, const torch::Tensor& gallery,
                                const std::vector<int64_t>& gt, const std::vector<int>& ks) {
  const auto ranks = retrieval_ranks(queries, gallery, gt);
  std::map<int, double> out;
  for (int k : ks) {
    if (k < 1) throw Error("recall: k must be >= 1");
    const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](int64_t r) { return r < k; });
    out[k] = 100.0 * static_cast<double>(hits) / static_cast<double>(ranks.size());
  }
  return out;
}

double recall_at_k(const torch::Tensor& queries, const torch::Tensor& gallery, const std::vector<int64_t>& gt, int k) {
  return recall_at(queries, gallery, gt, {k}).at(k);
}

BootstrapInterval bootstrap_mean(const std::vector<double>& values, int resamples, std::uint64_t seed) {
  if (values.empty()) throw Error("bootstrap: no values");
  if (resamples < 1) throw Error("bootstrap: resamples must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> means(resamples);
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += values[pick(rng)];
    m = s / static_cast<double>(values.size());
  }
  std::sort(means.begin(), means.end());
  auto q = [&](double p) { return means[static_cast<std::size_t>(p * (resamples - 1))]; };
  BootstrapInterval out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  out.lower = q(0.05);
  out.upper = q(0.95);
  return out;
}

}  // namespace mred::eval
