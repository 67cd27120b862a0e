#include "mred/common/attention.hpp"

#include <cmath>

namespace mred {

torch::Tensor multi_head_attention(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v, int heads,
                                   const std::optional<torch::Tensor>& key_pad) {
  const auto B = q.size(0), Nq = q.size(1), C = q.size(2), Nk = k.size(1);
  const auto hd = C / heads;
  auto split = [&](const torch::Tensor& t, int64_t n) { return t.reshape({B, n, heads, hd}).transpose(1, 2); };
  auto qh = split(q, Nq), kh = split(k, Nk), vh = split(v, Nk);
  auto scores = torch::matmul(qh, kh.transpose(-2, -1)) / std::sqrt(static_cast<double>(hd));
  if (key_pad) {
    auto m = key_pad->view({B, 1, 1, Nk});
    scores = scores.masked_fill(m, -1e9);
    auto attn = torch::softmax(scores, -1);
    // All-masked rows: zero them instead of averaging masked values.
    auto any_valid = (~*key_pad).any(1).view({B, 1, 1, 1}).to(attn.dtype());
    attn = attn * any_valid;
    return torch::matmul(attn, vh).transpose(1, 2).reshape({B, Nq, C});
  }
  auto attn = torch::softmax(scores, -1);
  return torch::matmul(attn, vh).transpose(1, 2).reshape({B, Nq, C});
}

}  // namespace mred
