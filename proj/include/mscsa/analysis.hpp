#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mscsa/assembly.hpp"

namespace mscsa::analysis {

// Reported numbers are multiply-accumulates. Norms, activations, softmax,
// pooling, scaling, bias and residual adds are tracked separately in
// aux_ops (element counts) and excluded from the headline.
struct LayerCost {
    std::string name;
    std::uint64_t macs = 0;
    std::uint64_t params = 0;
    std::uint64_t aux_ops = 0;
};

struct CostReport {
    std::vector<LayerCost> rows;   // per-layer rows then component summaries
    std::uint64_t total_macs = 0;  // add-on total over all per-layer rows
    std::uint64_t total_params = 0;
    double reference_total = 0;    // MACs baseline for the percentage column

    double percent(std::uint64_t macs) const {
        return reference_total > 0 ? 100.0 * static_cast<double>(macs) / reference_total : 0.0;
    }
    const LayerCost* find(const std::string& name) const;

    std::string to_text() const;
    std::string to_structured() const;  // JSON
};

// ---- primitive counters ----

std::uint64_t conv2d_macs(int n, int out_h, int out_w, int out_c, int in_c_per_group, int kh,
                          int kw);

// Q*K^T plus attention*V, value width 2*head_dim
std::uint64_t attention_macs(int n, int heads, std::int64_t q_tokens, std::int64_t kv_tokens,
                             int head_dim);

// ---- per-layer counters ----

struct LayerOps {
    std::uint64_t macs = 0;
    std::uint64_t aux = 0;
};

LayerOps csa_ops(int n, int c, int h, int w, int heads, int head_dim, DownsampleStrategy s);
LayerOps ffn_ops(int n, int c, int hidden, int h, int w);
LayerOps intra_ffn_ops(int n, const std::vector<int>& splits, const std::vector<int>& hiddens,
                       int h, int w);

// every stored tensor element; matches the checkpoint payload exactly
template <typename T>
std::int64_t count_params(const ParamStore<T>& store) {
    return store.total_elements();
}

// Full per-layer breakdown for a config at a given input resolution, batch 1.
CostReport report(const MscsaConfig& cfg, int resolution, double reference_total);

}  // namespace mscsa::analysis
