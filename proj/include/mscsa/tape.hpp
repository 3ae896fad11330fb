#pragma once

#include <functional>
#include <vector>

#include "mscsa/ops.hpp"
#include "mscsa/tensor.hpp"

namespace mscsa {

// Reverse-mode tape. Forward values are computed eagerly when an op is
// recorded; backward replays the records in reverse, accumulating into
// zero-initialized gradient buffers. A tape is single-writer; independent
// tapes may run on separate threads.
template <typename T>
class Tape {
public:
    using NodeId = int;

    NodeId input(Tensor<T> value, bool requires_grad = false);

    const Tensor<T>& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const Tensor<T>& grad(NodeId id) const;
    bool requires_grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
    std::size_t node_count() const { return nodes_.size(); }

    NodeId add(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId x, T s);
    NodeId matmul(NodeId a, NodeId b);
    NodeId bmm(NodeId a, NodeId b);
    NodeId conv2d(NodeId x, NodeId weight, NodeId bias, const ConvSpec& spec);  // bias = -1 for none
    NodeId batch_norm(NodeId x, NodeId gamma, NodeId beta, Tensor<T>& running_mean,
                      Tensor<T>& running_var, bool train, T momentum = T(0.1),
                      T eps = T(1e-5));
    NodeId adaptive_avg_pool(NodeId x, int th, int tw);
    NodeId upsample_bilinear(NodeId x, int th, int tw);
    NodeId softmax_lastdim(NodeId x);
    NodeId hardswish(NodeId x);
    NodeId gelu(NodeId x);
    NodeId sigmoid(NodeId x);
    NodeId slice_dim1(NodeId x, int start, int len);
    NodeId concat_dim1(const std::vector<NodeId>& xs);
    NodeId permute(NodeId x, std::vector<int> perm);
    NodeId reshape(NodeId x, std::vector<int> dims);
    NodeId reduce_sum(NodeId x);  // -> [1]
    NodeId cross_entropy(NodeId logits, std::vector<int> labels);  // mean CE -> [1]

    // Seeds d(loss)/d(loss) = 1 and walks the records once, newest first.
    // loss must be scalar.
    void backward(NodeId loss);

    // test hook: adds delta to the gradient of `id` after backward
    void perturb_grad(NodeId id, T delta);

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool needs_grad = false;
        bool has_grad = false;
    };
    struct Record {
        std::function<void(Tape&)> backprop;
    };

    NodeId push(Tensor<T> value, bool needs_grad);
    void accum(NodeId id, const Tensor<T>& delta);
    Tensor<T>& grad_ref(NodeId id);

    std::vector<Node> nodes_;
    std::vector<Record> records_;
};

// Central-difference gradient of a scalar function, the independent oracle
// for every analytic gradient. Per-element step h*( |x_i| + 1 ).
template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x,
                           T h = T(1e-4));

// max over elements of |a - b| / max(|a|, |b|, 1e-8)
template <typename T>
T max_rel_error(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace mscsa
