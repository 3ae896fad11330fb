#pragma once

#include <functional>
#include <vector>

#include "mscsa/tensor.hpp"

namespace mscsa::ops {

// Internal parallel-for over [0,n). Thread count comes from the
// MSCSA_THREADS env var (default 1); chunks are disjoint so results are
// bitwise independent of the thread count.
int thread_cap();
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body);

// ---- dense linear algebra ----

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// batched matmul over the leading dim: [B,m,k] x [B,k,n] -> [B,m,n]
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b);

// ---- convolution ----

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                 const ConvSpec& spec);

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const ConvSpec& spec) {
    return conv2d(x, weight, static_cast<const Tensor<T>*>(nullptr), spec);
}

template <typename T>
Tensor<T> conv2d_grad_input(const Tensor<T>& grad_out, const Tensor<T>& weight,
                            const std::vector<int>& input_dims, const ConvSpec& spec);

template <typename T>
Tensor<T> conv2d_grad_weight(const Tensor<T>& grad_out, const Tensor<T>& x,
                             const std::vector<int>& weight_dims, const ConvSpec& spec);

template <typename T>
Tensor<T> conv2d_grad_bias(const Tensor<T>& grad_out);

// ---- pooling / resampling ----

template <typename T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& x, int th, int tw);

template <typename T>
Tensor<T> adaptive_avg_pool_grad(const Tensor<T>& grad_out, int in_h, int in_w);

// align_corners = false
template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, int th, int tw);

template <typename T>
Tensor<T> upsample_bilinear_grad(const Tensor<T>& grad_out, int in_h, int in_w);

// ---- normalization ----

template <typename T>
struct BatchNormSaved {
    Tensor<T> mean;     // batch mean per channel (train) or running mean (eval)
    Tensor<T> inv_std;  // 1/sqrt(var + eps) actually used for normalization
    Tensor<T> xhat;     // normalized input, saved for backward
};

template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                           Tensor<T>& running_mean, Tensor<T>& running_var, T momentum, T eps,
                           BatchNormSaved<T>* saved = nullptr);

template <typename T>
Tensor<T> batch_norm_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          const Tensor<T>& running_mean, const Tensor<T>& running_var, T eps,
                          BatchNormSaved<T>* saved = nullptr);

template <typename T>
struct BatchNormGrads {
    Tensor<T> dx;
    Tensor<T> dgamma;
    Tensor<T> dbeta;
};

template <typename T>
BatchNormGrads<T> batch_norm_train_grad(const Tensor<T>& grad_out, const Tensor<T>& gamma,
                                        const BatchNormSaved<T>& saved);

template <typename T>
BatchNormGrads<T> batch_norm_eval_grad(const Tensor<T>& grad_out, const Tensor<T>& gamma,
                                       const BatchNormSaved<T>& saved);

// ---- activations ----

template <typename T>
Tensor<T> hardswish(const Tensor<T>& x);
template <typename T>
Tensor<T> hardswish_grad(const Tensor<T>& x, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> gelu(const Tensor<T>& x);
template <typename T>
Tensor<T> gelu_grad(const Tensor<T>& x, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid_grad(const Tensor<T>& y, const Tensor<T>& grad_out);

// ---- softmax ----

// softmax over the last dim, max-subtracted; rows are all leading dims.
template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x);

template <typename T>
Tensor<T> softmax_lastdim_grad(const Tensor<T>& y, const Tensor<T>& grad_out);

// mean cross-entropy over rows of [m,n] logits; labels in [0,n)
template <typename T>
struct CrossEntropyOut {
    T loss;
    Tensor<T> probs;
};

template <typename T>
CrossEntropyOut<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels);

// ---- structure ops ----

// split / concat along dim 1 (channels in NCHW, tokens in [B,T,d])
template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& x, const std::vector<int>& sizes);

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs);

template <typename T>
Tensor<T> slice_dim1(const Tensor<T>& x, int start, int len);

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s);

template <typename T>
T reduce_sum(const Tensor<T>& x);

}  // namespace mscsa::ops
