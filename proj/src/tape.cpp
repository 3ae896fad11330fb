#include "mscsa/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>

namespace mscsa {

template <typename T>
typename Tape<T>::NodeId Tape<T>::push(Tensor<T> value, bool needs_grad) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), needs_grad, false});
    return static_cast<NodeId>(nodes_.size() - 1);
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::input(Tensor<T> value, bool requires_grad) {
    return push(std::move(value), requires_grad);
}

template <typename T>
const Tensor<T>& Tape<T>::grad(NodeId id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad) throw ContractError("tape: gradient not computed; run backward first");
    return n.grad;
}

template <typename T>
Tensor<T>& Tape<T>::grad_ref(NodeId id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad) {
        n.grad = Tensor<T>(n.value.dims());
        n.has_grad = true;
    }
    return n.grad;
}

template <typename T>
void Tape<T>::accum(NodeId id, const Tensor<T>& delta) {
    Tensor<T>& g = grad_ref(id);
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += delta[i];
}

template <typename T>
void Tape<T>::perturb_grad(NodeId id, T delta) {
    Tensor<T>& g = grad_ref(id);
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += delta;
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::add(NodeId a, NodeId b) {
    NodeId out = push(ops::add(value(a), value(b)), requires_grad(a) || requires_grad(b));
    records_.push_back({[a, b, out](Tape& t) {
        t.accum(a, t.grad_ref(out));
        t.accum(b, t.grad_ref(out));
    }});
    return out;
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::mul(NodeId a, NodeId b) {
    NodeId out = push(ops::mul(value(a), value(b)), requires_grad(a) || requires_grad(b));
    records_.push_back({[a, b, out](Tape& t) {
        t.accum(a, ops::mul(t.grad_ref(out), t.value(b)));
        t.accum(b, ops::mul(t.grad_ref(out), t.value(a)));
    }});
    return out;
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::scale(NodeId x, T s) {
    NodeId out = push(ops::scale(value(x), s), requires_grad(x));
    records_.push_back({[x, s, out](Tape& t) { t.accum(x, ops::scale(t.grad_ref(out), s)); }});
    return out;
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::matmul(NodeId a, NodeId b) {
    NodeId out = push(ops::matmul(value(a), value(b)), requires_grad(a) || requires_grad(b));
    records_.push_back({[a, b, out](Tape& t) {
        const Tensor<T>& go = t.grad_ref(out);
        // dA = dY * B^T, dB = A^T * dY
        t.accum(a, ops::matmul(go, ops::permute(t.value(b), {1, 0})));
        t.accum(b, ops::matmul(ops::permute(t.value(a), {1, 0}), go));
    }});
    return out;
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::bmm(NodeId a, NodeId b) {
    NodeId out = push(ops::bmm(value(a), value(b)), requires_grad(a) || requires_grad(b));
    records_.push_back({[a, b, out](Tape& t) {
        const Tensor<T>& go = t.grad_ref(out);
        t.accum(a, ops::bmm(go, ops::permute(t.value(b), {0, 2, 1})));
        t.accum(b, ops::bmm(ops::permute(t.value(a), {0, 2, 1}), go));
    }});
    return out;
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::conv2d(NodeId x, NodeId weight, NodeId bias,
                                         const ConvSpec& spec) {
    const Tensor<T>* b = bias >= 0 ? &value(bias) : nullptr;
    bool req = requires_grad(x) || requires_grad(weight) || (bias >= 0 && requires_grad(bias));
    NodeId out = push(ops::conv2d(value(x), value(weight), b, spec), req);
    records_.push_back({[x, weight, bias, spec, out](Tape& t) {
        const Tensor<T>& go = t.grad_ref(out);
        t.accum(x, ops::conv2d_grad_input(go, t.value(weight), t.value(x).dims(), spec));
        t.accum(weight, ops::conv2d_grad_weight(go, t.value(x), t.value(weight).dims(), spec));
        if (bias >= 0) t.accum(bias, ops::conv2d_grad_bias(go));
    }});
    return out;
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::batch_norm(NodeId x, NodeId gamma, NodeId beta,
                                             Tensor<T>& running_mean, Tensor<T>& running_var,
                                             bool train, T momentum, T eps) {
    auto saved = std::make_shared<ops::BatchNormSaved<T>>();
    Tensor<T> y = train ? ops::batch_norm_train(value(x), value(gamma), value(beta), running_mean,
                                                running_var, momentum, eps, saved.get())
                        : ops::batch_norm_eval(value(x), value(gamma), value(beta), running_mean,
                                               running_var, eps, saved.get());
    bool req = requires_grad(x) || requires_grad(gamma) || requires_grad(beta);
    NodeId out = push(std::move(y), req);
    records_.push_back({[x, gamma, beta, train, saved, out](Tape& t) {
        const Tensor<T>& go = t.grad_ref(out);
        ops::BatchNormGrads<T> g = train ? ops::batch_norm_train_grad(go, t.value(gamma), *saved)
                                         : ops::batch_norm_eval_grad(go, t.value(gamma), *saved);
        t.accum(x, g.dx);
        t.accum(gamma, g.dgamma);
        t.accum(beta, g.dbeta);
    }});
    return out;
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::adaptive_avg_pool(NodeId x, int th, int tw) {
    int in_h = value(x).dim(2), in_w = value(x).dim(3);
    NodeId out = push(ops::adaptive_avg_pool(value(x), th, tw), requires_grad(x));
    records_.push_back({[x, in_h, in_w, out](Tape& t) {
        t.accum(x, ops::adaptive_avg_pool_grad(t.grad_ref(out), in_h, in_w));
    }});
    return out;
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::upsample_bilinear(NodeId x, int th, int tw) {
    int in_h = value(x).dim(2), in_w = value(x).dim(3);
    NodeId out = push(ops::upsample_bilinear(value(x), th, tw), requires_grad(x));
    records_.push_back({[x, in_h, in_w, out](Tape& t) {
        t.accum(x, ops::upsample_bilinear_grad(t.grad_ref(out), in_h, in_w));
    }});
    return out;
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::softmax_lastdim(NodeId x) {
    NodeId out = push(ops::softmax_lastdim(value(x)), requires_grad(x));
    records_.push_back({[x, out](Tape& t) {
        t.accum(x, ops::softmax_lastdim_grad(t.value(out), t.grad_ref(out)));
    }});
    return out;
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::hardswish(NodeId x) {
    NodeId out = push(ops::hardswish(value(x)), requires_grad(x));
    records_.push_back({[x, out](Tape& t) {
        t.accum(x, ops::hardswish_grad(t.value(x), t.grad_ref(out)));
    }});
    return out;
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::gelu(NodeId x) {
    NodeId out = push(ops::gelu(value(x)), requires_grad(x));
    records_.push_back({[x, out](Tape& t) {
        t.accum(x, ops::gelu_grad(t.value(x), t.grad_ref(out)));
    }});
    return out;
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::sigmoid(NodeId x) {
    NodeId out = push(ops::sigmoid(value(x)), requires_grad(x));
    records_.push_back({[x, out](Tape& t) {
        t.accum(x, ops::sigmoid_grad(t.value(out), t.grad_ref(out)));
    }});
    return out;
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::slice_dim1(NodeId x, int start, int len) {
    NodeId out = push(ops::slice_dim1(value(x), start, len), requires_grad(x));
    records_.push_back({[x, start, len, out](Tape& t) {
        const Tensor<T>& go = t.grad_ref(out);
        Tensor<T>& gx = t.grad_ref(x);
        int b = gx.dim(0), c = gx.dim(1);
        std::int64_t inner = 1;
        for (int i = 2; i < gx.rank(); ++i) inner *= gx.dim(i);
        for (int bi = 0; bi < b; ++bi) {
            const T* src = go.data() + static_cast<std::int64_t>(bi) * len * inner;
            T* dst = gx.data() + (static_cast<std::int64_t>(bi) * c + start) * inner;
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(len) * inner; ++i) dst[i] += src[i];
        }
    }});
    return out;
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::concat_dim1(const std::vector<NodeId>& xs) {
    std::vector<Tensor<T>> vals;
    vals.reserve(xs.size());
    bool req = false;
    for (NodeId id : xs) {
        vals.push_back(value(id));
        req = req || requires_grad(id);
    }
    NodeId out = push(ops::concat_channels(vals), req);
    records_.push_back({[xs, out](Tape& t) {
        const Tensor<T>& go = t.grad_ref(out);
        std::int64_t inner = 1;
        for (int i = 2; i < go.rank(); ++i) inner *= go.dim(i);
        int b = go.dim(0), total = go.dim(1);
        int start = 0;
        for (NodeId id : xs) {
            int len = t.value(id).dim(1);
            Tensor<T>& gx = t.grad_ref(id);
            for (int bi = 0; bi < b; ++bi) {
                const T* src = go.data() + (static_cast<std::int64_t>(bi) * total + start) * inner;
                T* dst = gx.data() + static_cast<std::int64_t>(bi) * len * inner;
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(len) * inner; ++i)
                    dst[i] += src[i];
            }
            start += len;
        }
    }});
    return out;
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::permute(NodeId x, std::vector<int> perm) {
    NodeId out = push(ops::permute(value(x), perm), requires_grad(x));
    std::vector<int> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
    records_.push_back({[x, inv, out](Tape& t) {
        t.accum(x, ops::permute(t.grad_ref(out), inv));
    }});
    return out;
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::reshape(NodeId x, std::vector<int> dims) {
    std::vector<int> orig = value(x).dims();
    NodeId out = push(value(x).reshaped(std::move(dims)), requires_grad(x));
    records_.push_back({[x, orig, out](Tape& t) {
        t.accum(x, t.grad_ref(out).reshaped(orig));
    }});
    return out;
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::reduce_sum(NodeId x) {
    Tensor<T> s({1});
    s[0] = ops::reduce_sum(value(x));
    NodeId out = push(std::move(s), requires_grad(x));
    records_.push_back({[x, out](Tape& t) {
        T g = t.grad_ref(out)[0];
        Tensor<T>& gx = t.grad_ref(x);
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    }});
    return out;
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::cross_entropy(NodeId logits, std::vector<int> labels) {
    ops::CrossEntropyOut<T> ce = ops::softmax_cross_entropy(value(logits), labels);
    Tensor<T> l({1});
    l[0] = ce.loss;
    NodeId out = push(std::move(l), requires_grad(logits));
    auto probs = std::make_shared<Tensor<T>>(std::move(ce.probs));
    records_.push_back({[logits, labels, probs, out](Tape& t) {
        T g = t.grad_ref(out)[0];
        int m = probs->dim(0), n = probs->dim(1);
        Tensor<T> dx({m, n});
        T inv_m = T(1) / static_cast<T>(m);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                T p = probs->at2(i, j);
                dx.at2(i, j) = g * inv_m * (p - (labels[static_cast<std::size_t>(i)] == j ? T(1) : T(0)));
            }
        }
        t.accum(logits, dx);
    }});
    return out;
}

template <typename T>
void Tape<T>::backward(NodeId loss) {
    if (value(loss).numel() != 1) {
        throw ContractError("backward: loss must be scalar, got " + value(loss).dims_str());
    }
    grad_ref(loss)[0] = T(1);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->backprop(*this);
}

template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T h) {
    Tensor<T> g(x.dims());
    Tensor<T> probe = x;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        T step = h * (std::abs(x[i]) + T(1));
        probe[i] = x[i] + step;
        T fp = f(probe);
        probe[i] = x[i] - step;
        T fm = f(probe);
        probe[i] = x[i];
        g[i] = (fp - fm) / (T(2) * step);
    }
    return g;
}

template <typename T>
T max_rel_error(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_dims(b)) throw ShapeError("max_rel_error: dims mismatch");
    T worst = T(0);
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        T denom = std::max({std::abs(a[i]), std::abs(b[i]), static_cast<T>(1e-8)});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

template class Tape<float>;
template class Tape<double>;
template Tensor<float> finite_diff_grad<float>(const std::function<float(const Tensor<float>&)>&,
                                               const Tensor<float>&, float);
template Tensor<double> finite_diff_grad<double>(
    const std::function<double(const Tensor<double>&)>&, const Tensor<double>&, double);
template float max_rel_error<float>(const Tensor<float>&, const Tensor<float>&);
template double max_rel_error<double>(const Tensor<double>&, const Tensor<double>&);

}  // namespace mscsa
