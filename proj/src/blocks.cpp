#include "mscsa/blocks.hpp"

#include <cmath>

namespace mscsa {

DownsampleStrategy strategy_from_string(const std::string& s) {
    if (s == "parallel_dwconv") return DownsampleStrategy::ParallelDwConv;
    if (s == "avgpool") return DownsampleStrategy::AvgPool;
    if (s == "cascade_dwconv") return DownsampleStrategy::CascadeDwConv;
    if (s == "single_dwconv") return DownsampleStrategy::SingleDwConv;
    throw ConfigError("unknown downsample strategy: " + s);
}

std::string to_string(DownsampleStrategy s) {
    switch (s) {
        case DownsampleStrategy::ParallelDwConv: return "parallel_dwconv";
        case DownsampleStrategy::AvgPool: return "avgpool";
        case DownsampleStrategy::CascadeDwConv: return "cascade_dwconv";
        case DownsampleStrategy::SingleDwConv: return "single_dwconv";
    }
    throw ConfigError("bad strategy enum");
}

std::vector<std::pair<int, int>> kv_scale_sizes(int h, int w, DownsampleStrategy s) {
    switch (s) {
        case DownsampleStrategy::ParallelDwConv:
        case DownsampleStrategy::AvgPool:
            return {{h, w}, {down2(h), down2(w)}, {down3(h), down3(w)}};
        case DownsampleStrategy::CascadeDwConv:
            // the second conv runs on the 2x map, so the coarsest scale is
            // down2(down2(.)) rather than down3(.)
            return {{h, w}, {down2(h), down2(w)}, {down2(down2(h)), down2(down2(w))}};
        case DownsampleStrategy::SingleDwConv:
            return {{h, w}, {down2(h), down2(w)}};
    }
    throw ConfigError("bad strategy enum");
}

std::int64_t kv_token_count(int h, int w, DownsampleStrategy s) {
    std::int64_t total = 0;
    for (auto [sh, sw] : kv_scale_sizes(h, w, s)) total += static_cast<std::int64_t>(sh) * sw;
    return total;
}

template <typename T>
std::vector<int> register_params(Tape<T>& tape, const ParamStore<T>& store) {
    std::vector<int> nodes;
    nodes.reserve(static_cast<std::size_t>(store.size()));
    for (const auto& e : store.entries()) nodes.push_back(tape.input(e.value, e.learnable));
    return nodes;
}

// ---- BatchNormParams ----

template <typename T>
BatchNormParams<T> BatchNormParams<T>::create(ParamStore<T>& store, const std::string& prefix,
                                              int channels) {
    BatchNormParams p;
    p.channels_ = channels;
    p.gamma_ = store.add(prefix + ".gamma", Tensor<T>::full({channels}, T(1)));
    p.beta_ = store.add(prefix + ".beta", Tensor<T>({channels}));
    p.mean_ = store.add(prefix + ".running_mean", Tensor<T>({channels}), false);
    p.var_ = store.add(prefix + ".running_var", Tensor<T>::full({channels}, T(1)), false);
    return p;
}

template <typename T>
int BatchNormParams<T>::forward(Ctx<T>& ctx, int x) const {
    return ctx.tape.batch_norm(x, ctx.param_nodes[static_cast<std::size_t>(gamma_)],
                               ctx.param_nodes[static_cast<std::size_t>(beta_)],
                               ctx.store.value(mean_), ctx.store.value(var_), ctx.train);
}

// ---- ConvParams ----

template <typename T>
ConvParams<T> ConvParams<T>::create(ParamStore<T>& store, const std::string& prefix, int out_c,
                                    int in_c, const ConvSpec& spec, bool bias,
                                    std::uint64_t seed) {
    ConvParams p;
    p.spec_ = spec;
    std::vector<int> wd = {out_c, in_c / spec.groups, spec.kh, spec.kw};
    p.weight_ = store.add(prefix + ".weight", init_trunc_normal<T>(wd, seed, prefix + ".weight"));
    if (bias) p.bias_ = store.add(prefix + ".bias", Tensor<T>({out_c}));
    return p;
}

template <typename T>
int ConvParams<T>::forward(Ctx<T>& ctx, int x) const {
    int bias_node = bias_ >= 0 ? ctx.param_nodes[static_cast<std::size_t>(bias_)] : -1;
    return ctx.tape.conv2d(x, ctx.param_nodes[static_cast<std::size_t>(weight_)], bias_node, spec_);
}

// ---- attention head reshape helpers ----

namespace {

// N x (heads*dd) x h x w  ->  (N*heads) x (h*w) x dd
template <typename T>
int map_to_head_tokens(Tape<T>& tape, int x, int heads, int dd) {
    const auto& d = tape.value(x).dims();
    int n = d[0], h = d[2], w = d[3];
    int r = tape.reshape(x, {n, heads, dd, h * w});
    r = tape.permute(r, {0, 1, 3, 2});
    return tape.reshape(r, {n * heads, h * w, dd});
}

// (N*heads) x (h*w) x dd  ->  N x (heads*dd) x h x w
template <typename T>
int head_tokens_to_map(Tape<T>& tape, int x, int n, int heads, int dd, int h, int w) {
    int r = tape.reshape(x, {n, heads, h * w, dd});
    r = tape.permute(r, {0, 1, 3, 2});
    return tape.reshape(r, {n, heads * dd, h, w});
}

}  // namespace

// ---- CsaLayer ----

template <typename T>
CsaLayer<T> CsaLayer<T>::create(ParamStore<T>& store, const std::string& prefix, int channels,
                                int heads, int head_dim, DownsampleStrategy strategy,
                                std::uint64_t seed) {
    if (heads < 1 || head_dim < 1) throw ConfigError("csa: heads and head_dim must be positive");
    if (channels % heads != 0) {
        throw ConfigError("csa: channels " + std::to_string(channels) +
                          " not divisible by heads " + std::to_string(heads));
    }
    CsaLayer layer;
    layer.channels_ = channels;
    layer.heads_ = heads;
    layer.head_dim_ = head_dim;
    layer.strategy_ = strategy;
    int qk_dim = heads * head_dim;
    int v_dim = heads * 2 * head_dim;

    layer.norm_ = BatchNormParams<T>::create(store, prefix + ".norm", channels);
    layer.q_ = ConvParams<T>::create(store, prefix + ".q", qk_dim, channels,
                                     ConvSpec::pointwise(), true, seed);

    bool conv_down = strategy != DownsampleStrategy::AvgPool;
    if (conv_down) {
        layer.down1_ = ConvParams<T>::create(store, prefix + ".down1", channels, channels,
                                             ConvSpec::depthwise3x3(channels, 2), false, seed);
        layer.down1_norm_ = BatchNormParams<T>::create(store, prefix + ".down1.norm", channels);
        if (strategy != DownsampleStrategy::SingleDwConv) {
            int stride2nd = strategy == DownsampleStrategy::CascadeDwConv ? 2 : 3;
            layer.down2_ = ConvParams<T>::create(store, prefix + ".down2", channels, channels,
                                                 ConvSpec::depthwise3x3(channels, stride2nd),
                                                 false, seed);
            layer.down2_norm_ = BatchNormParams<T>::create(store, prefix + ".down2.norm", channels);
        }
    }

    int scales = layer.num_scales();
    for (int i = 0; i < scales; ++i) {
        // no bias on the key projections: softmax is invariant to a uniform
        // per-row score shift, which makes key biases near-null directions
        layer.k_.push_back(ConvParams<T>::create(store, prefix + ".k" + std::to_string(i), qk_dim,
                                                 channels, ConvSpec::pointwise(), false, seed));
        layer.v_.push_back(ConvParams<T>::create(store, prefix + ".v" + std::to_string(i), v_dim,
                                                 channels, ConvSpec::pointwise(), true, seed));
    }
    layer.pcp_ = ConvParams<T>::create(store, prefix + ".pcp", v_dim, v_dim,
                                       ConvSpec::depthwise3x3(v_dim, 1), true, seed);
    layer.out_ = ConvParams<T>::create(store, prefix + ".out", channels, v_dim,
                                       ConvSpec::pointwise(), true, seed);
    return layer;
}

template <typename T>
std::vector<int> CsaLayer<T>::scale_nodes(Ctx<T>& ctx, int xn) const {
    const auto& d = ctx.tape.value(xn).dims();
    int h = d[2], w = d[3];
    std::vector<int> scales = {xn};
    switch (strategy_) {
        case DownsampleStrategy::ParallelDwConv: {
            scales.push_back(down1_norm_.forward(ctx, down1_.forward(ctx, xn)));
            scales.push_back(down2_norm_.forward(ctx, down2_.forward(ctx, xn)));
            break;
        }
        case DownsampleStrategy::AvgPool: {
            scales.push_back(ctx.tape.adaptive_avg_pool(xn, down2(h), down2(w)));
            scales.push_back(ctx.tape.adaptive_avg_pool(xn, down3(h), down3(w)));
            break;
        }
        case DownsampleStrategy::CascadeDwConv: {
            int x1 = down1_norm_.forward(ctx, down1_.forward(ctx, xn));
            scales.push_back(x1);
            scales.push_back(down2_norm_.forward(ctx, down2_.forward(ctx, x1)));
            break;
        }
        case DownsampleStrategy::SingleDwConv: {
            scales.push_back(down1_norm_.forward(ctx, down1_.forward(ctx, xn)));
            break;
        }
    }
    return scales;
}

template <typename T>
int CsaLayer<T>::forward(Ctx<T>& ctx, int x, const Options& opt) const {
    const auto& xd = ctx.tape.value(x).dims();
    if (xd.size() != 4 || xd[1] != channels_) {
        throw ShapeError("csa: expected NxCxHxW with C=" + std::to_string(channels_));
    }
    int n = xd[0], h = xd[2], w = xd[3];
    if (h < 3 || w < 3) {
        throw ConfigError("csa: spatial size " + std::to_string(h) + "x" + std::to_string(w) +
                          " too small for the coarsest scale; minimum is 3x3");
    }
    if (!opt.use_attention && !opt.use_pcp) {
        throw ContractError("csa: at least one of attention and pcp must be enabled");
    }
    int dd = head_dim_;
    int vd = 2 * head_dim_;

    int xn = norm_.forward(ctx, x);
    std::vector<int> scales = scale_nodes(ctx, xn);

    // full-resolution value, needed by attention and by the conv path
    int v0_map = v_[0].forward(ctx, scales[0]);

    int y = -1;
    if (opt.use_attention) {
        int q = map_to_head_tokens(ctx.tape, q_.forward(ctx, xn), heads_, dd);
        std::vector<int> k_tok, v_tok;
        for (std::size_t i = 0; i < scales.size(); ++i) {
            int ki = k_[i].forward(ctx, scales[i]);
            k_tok.push_back(map_to_head_tokens(ctx.tape, ki, heads_, dd));
            int vi = i == 0 ? v0_map : v_[i].forward(ctx, scales[i]);
            v_tok.push_back(map_to_head_tokens(ctx.tape, vi, heads_, vd));
        }
        int k = ctx.tape.concat_dim1(k_tok);
        int v = ctx.tape.concat_dim1(v_tok);
        int scores = ctx.tape.bmm(q, ctx.tape.permute(k, {0, 2, 1}));
        scores = ctx.tape.scale(scores, static_cast<T>(1.0 / std::sqrt(static_cast<double>(dd))));
        int attn = ctx.tape.softmax_lastdim(scores);
        int o = ctx.tape.bmm(attn, v);
        y = head_tokens_to_map(ctx.tape, o, n, heads_, vd, h, w);
    }
    if (opt.use_pcp) {
        int pcp = pcp_.forward(ctx, ctx.tape.hardswish(v0_map));
        y = y >= 0 ? ctx.tape.add(y, pcp) : pcp;
    }
    y = ctx.tape.hardswish(y);
    return out_.forward(ctx, y);
}

// ---- FfnLayer ----

template <typename T>
FfnLayer<T> FfnLayer<T>::create(ParamStore<T>& store, const std::string& prefix, int channels,
                                int hidden, std::uint64_t seed) {
    FfnLayer layer;
    layer.channels_ = channels;
    layer.hidden_ = hidden;
    layer.norm_ = BatchNormParams<T>::create(store, prefix + ".norm", channels);
    layer.expand_ = ConvParams<T>::create(store, prefix + ".expand", hidden, channels,
                                          ConvSpec::pointwise(), true, seed);
    layer.dw_ = ConvParams<T>::create(store, prefix + ".dw", hidden, hidden,
                                      ConvSpec::depthwise3x3(hidden, 1), true, seed);
    layer.project_ = ConvParams<T>::create(store, prefix + ".project", channels, hidden,
                                           ConvSpec::pointwise(), true, seed);
    return layer;
}

template <typename T>
int FfnLayer<T>::forward(Ctx<T>& ctx, int x) const {
    if (ctx.tape.value(x).dim(1) != channels_) {
        throw ShapeError("ffn: channel mismatch, expected " + std::to_string(channels_) +
                         " got " + std::to_string(ctx.tape.value(x).dim(1)));
    }
    int y = norm_.forward(ctx, x);
    y = expand_.forward(ctx, y);
    y = ctx.tape.gelu(y);
    y = dw_.forward(ctx, y);
    return project_.forward(ctx, y);
}

// ---- IntraFfnLayer ----

template <typename T>
IntraFfnLayer<T> IntraFfnLayer<T>::create(ParamStore<T>& store, const std::string& prefix,
                                          const std::vector<int>& splits,
                                          const std::vector<int>& hiddens, std::uint64_t seed) {
    if (splits.empty() || splits.size() != hiddens.size()) {
        throw ConfigError("intra_ffn: splits and hiddens must be non-empty and equal length");
    }
    IntraFfnLayer layer;
    layer.splits_ = splits;
    for (std::size_t i = 0; i < splits.size(); ++i) {
        layer.stages_.push_back(FfnLayer<T>::create(store, prefix + ".stage" + std::to_string(i),
                                                    splits[i], hiddens[i], seed));
    }
    return layer;
}

template <typename T>
int IntraFfnLayer<T>::forward(Ctx<T>& ctx, int x) const {
    int total = 0;
    for (int s : splits_) total += s;
    if (ctx.tape.value(x).dim(1) != total) {
        throw ShapeError("intra_ffn: channel count " + std::to_string(ctx.tape.value(x).dim(1)) +
                         " does not match split sum " + std::to_string(total));
    }
    std::vector<int> outs;
    int start = 0;
    for (std::size_t i = 0; i < splits_.size(); ++i) {
        int part = ctx.tape.slice_dim1(x, start, splits_[i]);
        outs.push_back(stages_[i].forward(ctx, part));
        start += splits_[i];
    }
    return ctx.tape.concat_dim1(outs);
}

#define MSCSA_INSTANTIATE_BLOCKS(T)                                              \
    template std::vector<int> register_params<T>(Tape<T>&, const ParamStore<T>&); \
    template class BatchNormParams<T>;                                           \
    template class ConvParams<T>;                                                \
    template class CsaLayer<T>;                                                  \
    template class FfnLayer<T>;                                                  \
    template class IntraFfnLayer<T>;

MSCSA_INSTANTIATE_BLOCKS(float)
MSCSA_INSTANTIATE_BLOCKS(double)

#undef MSCSA_INSTANTIATE_BLOCKS

}  // namespace mscsa
