#include "mscsa/analysis.hpp"

#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace mscsa::analysis {

using nlohmann::json;

const LayerCost* CostReport::find(const std::string& name) const {
    for (const auto& r : rows) {
        if (r.name == name) return &r;
    }
    return nullptr;
}

std::uint64_t conv2d_macs(int n, int out_h, int out_w, int out_c, int in_c_per_group, int kh,
                          int kw) {
    return static_cast<std::uint64_t>(n) * out_h * out_w * out_c * in_c_per_group * kh * kw;
}

std::uint64_t attention_macs(int n, int heads, std::int64_t q_tokens, std::int64_t kv_tokens,
                             int head_dim) {
    std::uint64_t qk = static_cast<std::uint64_t>(q_tokens) * kv_tokens * head_dim;
    std::uint64_t av = static_cast<std::uint64_t>(q_tokens) * kv_tokens * (2 * head_dim);
    return static_cast<std::uint64_t>(n) * heads * (qk + av);
}

LayerOps csa_ops(int n, int c, int h, int w, int heads, int head_dim, DownsampleStrategy s) {
    LayerOps ops;
    auto scales = kv_scale_sizes(h, w, s);
    std::int64_t hw = static_cast<std::int64_t>(h) * w;
    std::int64_t tokens = kv_token_count(h, w, s);
    int qk_dim = heads * head_dim;
    int v_dim = heads * 2 * head_dim;

    ops.aux += static_cast<std::uint64_t>(n) * c * hw;  // pre-norm
    ops.macs += conv2d_macs(n, h, w, qk_dim, c, 1, 1);  // q projection
    ops.aux += static_cast<std::uint64_t>(n) * qk_dim * hw;  // q bias

    bool conv_down = s != DownsampleStrategy::AvgPool;
    for (std::size_t i = 1; i < scales.size(); ++i) {
        auto [sh, sw] = scales[i];
        if (conv_down) {
            ops.macs += conv2d_macs(n, sh, sw, c, 1, 3, 3);            // depthwise downsample
            ops.aux += static_cast<std::uint64_t>(n) * c * sh * sw;    // its norm
        } else {
            ops.aux += static_cast<std::uint64_t>(n) * c * hw;         // pooling reads
        }
    }
    for (auto [sh, sw] : scales) {
        ops.macs += conv2d_macs(n, sh, sw, qk_dim, c, 1, 1);  // k_i (bias-free)
        ops.macs += conv2d_macs(n, sh, sw, v_dim, c, 1, 1);   // v_i
        ops.aux += static_cast<std::uint64_t>(n) * v_dim * sh * sw;  // v bias
    }
    ops.macs += attention_macs(n, heads, hw, tokens, head_dim);
    // score scaling + softmax
    ops.aux += 2ULL * static_cast<std::uint64_t>(n) * heads * hw * tokens;
    // pcp: hardswish on v0, depthwise conv, bias, add into the attention map
    ops.aux += static_cast<std::uint64_t>(n) * v_dim * hw;
    ops.macs += conv2d_macs(n, h, w, v_dim, 1, 3, 3);
    ops.aux += 2ULL * static_cast<std::uint64_t>(n) * v_dim * hw;
    // hardswish on the attention output
    ops.aux += static_cast<std::uint64_t>(n) * v_dim * hw;
    // output projection
    ops.macs += conv2d_macs(n, h, w, c, v_dim, 1, 1);
    ops.aux += static_cast<std::uint64_t>(n) * c * hw;
    return ops;
}

LayerOps ffn_ops(int n, int c, int hidden, int h, int w) {
    LayerOps ops;
    std::int64_t hw = static_cast<std::int64_t>(h) * w;
    ops.aux += static_cast<std::uint64_t>(n) * c * hw;  // pre-norm
    ops.macs += conv2d_macs(n, h, w, hidden, c, 1, 1);
    // bias, gelu
    ops.aux += 2ULL * static_cast<std::uint64_t>(n) * hidden * hw;
    ops.macs += conv2d_macs(n, h, w, hidden, 1, 3, 3);
    ops.aux += static_cast<std::uint64_t>(n) * hidden * hw;
    ops.macs += conv2d_macs(n, h, w, c, hidden, 1, 1);
    ops.aux += static_cast<std::uint64_t>(n) * c * hw;
    return ops;
}

LayerOps intra_ffn_ops(int n, const std::vector<int>& splits, const std::vector<int>& hiddens,
                       int h, int w) {
    LayerOps ops;
    for (std::size_t i = 0; i < splits.size(); ++i) {
        LayerOps s = ffn_ops(n, splits[i], hiddens[i], h, w);
        ops.macs += s.macs;
        ops.aux += s.aux;
    }
    return ops;
}

CostReport report(const MscsaConfig& cfg, int resolution, double reference_total) {
    MscsaConfig rc = cfg;
    rc.input_resolution = resolution;
    rc.validate();

    MscsaModel<float> model = MscsaModel<float>::build(rc);
    const ParamStore<float>& store = model.params();

    CostReport rep;
    rep.reference_total = reference_total;

    const int n = 1;
    int ph = rc.pooled_h(), pw = rc.pooled_w();
    int c = rc.total_channels();
    std::vector<int> squeezed = rc.squeezed_channels();
    std::vector<int> hiddens = rc.ffn_hiddens();
    auto sizes = rc.stage_sizes();

    auto push = [&rep](std::string name, std::uint64_t macs, std::uint64_t params,
                       std::uint64_t aux) {
        rep.rows.push_back(LayerCost{std::move(name), macs, params, aux});
    };

    std::uint64_t total_macs = 0;
    // aggregation: pooling reads + optional squeeze convs
    for (std::size_t i = 0; i < squeezed.size(); ++i) {
        std::uint64_t aux = static_cast<std::uint64_t>(n) * rc.profile.channels[i] *
                            sizes[i].first * sizes[i].second;
        if (rc.squeeze_ratio) {
            std::uint64_t macs =
                conv2d_macs(n, ph, pw, squeezed[i], rc.profile.channels[i], 1, 1);
            aux += static_cast<std::uint64_t>(n) * squeezed[i] * ph * pw;  // bias
            std::string prefix = "aggregate.squeeze" + std::to_string(i);
            push(prefix, macs, static_cast<std::uint64_t>(store.elements_with_prefix(prefix)),
                 aux);
            total_macs += macs;
        } else {
            push("aggregate.pool" + std::to_string(i), 0, 0, aux);
        }
    }

    LayerOps csa = csa_ops(n, c, ph, pw, rc.heads, rc.head_dim, rc.strategy);
    LayerOps intra = intra_ffn_ops(n, squeezed, hiddens, ph, pw);
    LayerOps ffn = ffn_ops(n, c, rc.trunk_hidden(), ph, pw);
    std::uint64_t residual_aux = static_cast<std::uint64_t>(n) * c * ph * pw;

    for (int b = 0; b < rc.depth; ++b) {
        std::string bp = "block" + std::to_string(b);
        push(bp + ".csa0", csa.macs,
             static_cast<std::uint64_t>(store.elements_with_prefix(bp + ".csa0")),
             csa.aux + residual_aux);
        push(bp + ".intra_ffn", intra.macs,
             static_cast<std::uint64_t>(store.elements_with_prefix(bp + ".intra_ffn")),
             intra.aux + residual_aux);
        push(bp + ".csa1", csa.macs,
             static_cast<std::uint64_t>(store.elements_with_prefix(bp + ".csa1")),
             csa.aux + residual_aux);
        push(bp + ".ffn", ffn.macs,
             static_cast<std::uint64_t>(store.elements_with_prefix(bp + ".ffn")),
             ffn.aux + residual_aux);
        total_macs += 2 * csa.macs + intra.macs + ffn.macs;
    }

    if (rc.variant == Variant::Classification) {
        std::uint64_t macs = conv2d_macs(n, 1, 1, rc.num_classes, c, 1, 1);
        std::uint64_t aux = static_cast<std::uint64_t>(n) * c * ph * pw +  // global pool
                            static_cast<std::uint64_t>(n) * rc.num_classes;
        push("head", macs, static_cast<std::uint64_t>(store.elements_with_prefix("head")), aux);
        total_macs += macs;
    } else {
        for (int i = 0; i < rc.profile.num_stages(); ++i) {
            int fc = rc.fusion_channels_for(i);
            auto [sh, sw] = sizes[static_cast<std::size_t>(i)];
            std::uint64_t macs = conv2d_macs(n, sh, sw, fc, squeezed[static_cast<std::size_t>(i)], 1, 1) * 2 +
                                 conv2d_macs(n, sh, sw, fc, rc.profile.channels[static_cast<std::size_t>(i)], 1, 1);
            // upsample + sigmoid + gate mul + inject add + biases
            std::uint64_t aux = static_cast<std::uint64_t>(n) * squeezed[static_cast<std::size_t>(i)] * sh * sw +
                                6ULL * static_cast<std::uint64_t>(n) * fc * sh * sw;
            std::string prefix = "fusion.stage" + std::to_string(i);
            push(prefix, macs, static_cast<std::uint64_t>(store.elements_with_prefix(prefix)), aux);
            total_macs += macs;
        }
    }

    // component summaries: cost of one layer of each kind
    std::uint64_t depth_gate = rc.depth > 0 ? 1 : 0;
    push("CSA", csa.macs * depth_gate,
         depth_gate ? static_cast<std::uint64_t>(store.elements_with_prefix("block0.csa0")) : 0,
         csa.aux * depth_gate);
    push("FFN", ffn.macs * depth_gate,
         depth_gate ? static_cast<std::uint64_t>(store.elements_with_prefix("block0.ffn")) : 0,
         ffn.aux * depth_gate);
    push("Intra-FFN", intra.macs * depth_gate,
         depth_gate ? static_cast<std::uint64_t>(store.elements_with_prefix("block0.intra_ffn")) : 0,
         intra.aux * depth_gate);

    rep.total_macs = total_macs;
    rep.total_params = static_cast<std::uint64_t>(count_params(store));
    return rep;
}

std::string CostReport::to_text() const {
    std::ostringstream os;
    os << std::left << std::setw(28) << "component" << std::right << std::setw(14) << "MACs"
       << std::setw(12) << "MACs(G)" << std::setw(12) << "params";
    if (reference_total > 0) os << std::setw(10) << "%ref";
    os << std::setw(14) << "aux_ops" << "\n";
    auto line = [&](const LayerCost& r) {
        os << std::left << std::setw(28) << r.name << std::right << std::setw(14) << r.macs
           << std::setw(12) << std::fixed << std::setprecision(4)
           << static_cast<double>(r.macs) / 1e9 << std::setw(12) << r.params;
        if (reference_total > 0) {
            os << std::setw(9) << std::setprecision(2) << percent(r.macs) << "%";
        }
        os << std::setw(14) << r.aux_ops << "\n";
    };
    for (const auto& r : rows) line(r);
    os << std::left << std::setw(28) << "total" << std::right << std::setw(14) << total_macs
       << std::setw(12) << std::setprecision(4) << static_cast<double>(total_macs) / 1e9
       << std::setw(12) << total_params;
    if (reference_total > 0) os << std::setw(9) << std::setprecision(2) << percent(total_macs) << "%";
    os << "\n";
    return os.str();
}

std::string CostReport::to_structured() const {
    json j;
    j["reference_total"] = reference_total;
    j["total_macs"] = total_macs;
    j["total_params"] = total_params;
    j["rows"] = json::array();
    for (const auto& r : rows) {
        json row;
        row["name"] = r.name;
        row["macs"] = r.macs;
        row["params"] = r.params;
        row["aux_ops"] = r.aux_ops;
        if (reference_total > 0) row["percent"] = percent(r.macs);
        j["rows"].push_back(row);
    }
    return j.dump(2);
}

}  // namespace mscsa::analysis
