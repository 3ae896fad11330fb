#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mscsa/params.hpp"
#include "mscsa/tape.hpp"

namespace mscsa {

// Downsampling of the key/value path. ParallelDwConv is the default: two
// depthwise convolutions applied to the full-resolution map in parallel.
enum class DownsampleStrategy { ParallelDwConv, AvgPool, CascadeDwConv, SingleDwConv };

DownsampleStrategy strategy_from_string(const std::string& s);
std::string to_string(DownsampleStrategy s);

// 2x / 3x downsampled extents: floor((n-1)/2)+1 and floor((n-1)/3)+1,
// i.e. what a 3x3 conv with padding 1 and stride 2 or 3 produces.
inline int down2(int n) { return (n - 1) / 2 + 1; }
inline int down3(int n) { return (n - 1) / 3 + 1; }

// (h, w) of each key/value scale for a given input size and strategy
std::vector<std::pair<int, int>> kv_scale_sizes(int h, int w, DownsampleStrategy s);
std::int64_t kv_token_count(int h, int w, DownsampleStrategy s);

// Per-forward context: the tape, the store (for running-stat updates), and
// the tape leaf ids of every store entry.
template <typename T>
struct Ctx {
    Tape<T>& tape;
    ParamStore<T>& store;
    const std::vector<int>& param_nodes;
    bool train = false;
};

// Creates one tape leaf per store entry (learnable entries require grad).
template <typename T>
std::vector<int> register_params(Tape<T>& tape, const ParamStore<T>& store);

// BatchNorm with affine params and running stats held in the store.
template <typename T>
class BatchNormParams {
public:
    static BatchNormParams create(ParamStore<T>& store, const std::string& prefix, int channels);
    int forward(Ctx<T>& ctx, int x) const;
    int channels() const { return channels_; }

private:
    int gamma_ = -1, beta_ = -1, mean_ = -1, var_ = -1;
    int channels_ = 0;
};

// Convolution weights (+ optional bias) held in the store.
template <typename T>
class ConvParams {
public:
    static ConvParams create(ParamStore<T>& store, const std::string& prefix, int out_c, int in_c,
                             const ConvSpec& spec, bool bias, std::uint64_t seed);
    int forward(Ctx<T>& ctx, int x) const;
    const ConvSpec& spec() const { return spec_; }

private:
    int weight_ = -1, bias_ = -1;
    ConvSpec spec_;
};

// Cross-Scale Attention: pre-norm, 1x1 Q projection, per-scale K/V
// projections over the downsampled maps, attention across the concatenated
// scales, plus a parallel convolution path on the full-resolution value.
template <typename T>
class CsaLayer {
public:
    // component switches matching the ablation study
    struct Options {
        bool use_attention = true;
        bool use_pcp = true;
    };

    static CsaLayer create(ParamStore<T>& store, const std::string& prefix, int channels,
                           int heads, int head_dim, DownsampleStrategy strategy,
                           std::uint64_t seed);

    // returns the branch output; the residual add is the caller's job
    int forward(Ctx<T>& ctx, int x, const Options& opt = {}) const;

    int channels() const { return channels_; }
    int heads() const { return heads_; }
    int head_dim() const { return head_dim_; }
    DownsampleStrategy strategy() const { return strategy_; }
    int num_scales() const { return strategy_ == DownsampleStrategy::SingleDwConv ? 2 : 3; }

private:
    std::vector<int> scale_nodes(Ctx<T>& ctx, int xn) const;

    int channels_ = 0, heads_ = 0, head_dim_ = 0;
    DownsampleStrategy strategy_ = DownsampleStrategy::ParallelDwConv;
    BatchNormParams<T> norm_;
    ConvParams<T> q_;
    ConvParams<T> down1_, down2_;
    BatchNormParams<T> down1_norm_, down2_norm_;
    std::vector<ConvParams<T>> k_, v_;
    ConvParams<T> pcp_;
    ConvParams<T> out_;
};

// pointwise expand -> GELU -> 3x3 depthwise -> pointwise project, pre-norm
template <typename T>
class FfnLayer {
public:
    static FfnLayer create(ParamStore<T>& store, const std::string& prefix, int channels,
                           int hidden, std::uint64_t seed);
    int forward(Ctx<T>& ctx, int x) const;
    int channels() const { return channels_; }
    int hidden() const { return hidden_; }

private:
    int channels_ = 0, hidden_ = 0;
    BatchNormParams<T> norm_;
    ConvParams<T> expand_, dw_, project_;
};

// FFN applied block-diagonally over per-stage channel groups
template <typename T>
class IntraFfnLayer {
public:
    static IntraFfnLayer create(ParamStore<T>& store, const std::string& prefix,
                                const std::vector<int>& splits, const std::vector<int>& hiddens,
                                std::uint64_t seed);
    int forward(Ctx<T>& ctx, int x) const;
    const std::vector<int>& splits() const { return splits_; }

private:
    std::vector<int> splits_;
    std::vector<FfnLayer<T>> stages_;
};

}  // namespace mscsa
