#include "mscsa/assembly.hpp"

#include <algorithm>
#include <cmath>

namespace mscsa {

template <typename T>
void StagePyramid<T>::validate() const {
    if (stages.empty()) throw ConfigError("pyramid: no stages");
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (stages[i].feat.rank() != 4) throw ShapeError("pyramid: stage features must be NCHW");
        if (stages[i].feat.dim(0) != stages[0].feat.dim(0)) {
            throw ShapeError("pyramid: batch dims differ across stages");
        }
        if (i > 0 && stages[i].stride <= stages[i - 1].stride) {
            throw ConfigError("pyramid: strides must be strictly increasing");
        }
    }
}

template <typename T>
StagePyramid<T> synth_pyramid(const Profile& profile, int resolution, std::uint64_t seed,
                              int batch) {
    if (batch < 1) throw ConfigError("synth_pyramid: batch must be >= 1");
    StagePyramid<T> pyr;
    for (std::size_t si = 0; si < profile.channels.size(); ++si) {
        int stride = profile.strides[si];
        if (resolution % stride != 0) {
            throw ConfigError("synth_pyramid: resolution " + std::to_string(resolution) +
                              " not divisible by stride " + std::to_string(stride));
        }
        int c = profile.channels[si];
        int hw = resolution / stride;
        Tensor<T> feat({batch, c, hw, hw});
        std::int64_t per_sample = static_cast<std::int64_t>(c) * hw * hw;
        for (int n = 0; n < batch; ++n) {
            Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(n) * 1000003ULL + si));
            T* dst = feat.data() + n * per_sample;
            for (std::int64_t i = 0; i < per_sample; ++i) dst[i] = static_cast<T>(rng.normal());
        }
        pyr.stages.push_back({std::move(feat), stride});
    }
    return pyr;
}

template <typename T>
MscsaModel<T> MscsaModel<T>::build(const MscsaConfig& cfg) {
    cfg.validate();
    MscsaModel model;
    model.cfg_ = cfg;
    auto& store = model.store_;
    std::uint64_t seed = cfg.seed;

    std::vector<int> squeezed = cfg.squeezed_channels();
    if (cfg.squeeze_ratio) {
        for (std::size_t i = 0; i < squeezed.size(); ++i) {
            std::string prefix = "aggregate.squeeze" + std::to_string(i);
            int in_c = cfg.profile.channels[i];
            model.squeeze_w_.push_back(store.add(
                prefix + ".weight",
                init_trunc_normal<T>({squeezed[i], in_c, 1, 1}, seed, prefix + ".weight")));
            model.squeeze_b_.push_back(store.add(prefix + ".bias", Tensor<T>({squeezed[i]})));
        }
    }

    int c = cfg.total_channels();
    std::vector<int> hiddens = cfg.ffn_hiddens();
    for (int b = 0; b < cfg.depth; ++b) {
        std::string bp = "block" + std::to_string(b);
        Block blk;
        blk.csa0 = CsaLayer<T>::create(store, bp + ".csa0", c, cfg.heads, cfg.head_dim,
                                       cfg.strategy, seed);
        blk.intra = IntraFfnLayer<T>::create(store, bp + ".intra_ffn", squeezed, hiddens, seed);
        blk.csa1 = CsaLayer<T>::create(store, bp + ".csa1", c, cfg.heads, cfg.head_dim,
                                       cfg.strategy, seed);
        blk.ffn = FfnLayer<T>::create(store, bp + ".ffn", c, cfg.trunk_hidden(), seed);
        model.blocks_.push_back(std::move(blk));
    }

    if (cfg.variant == Variant::Classification) {
        model.head_w_ = store.add(
            "head.weight",
            init_trunc_normal<T>({cfg.num_classes, c, 1, 1}, seed, "head.weight"));
        model.head_b_ = store.add("head.bias", Tensor<T>({cfg.num_classes}));
    } else {
        for (int i = 0; i < cfg.profile.num_stages(); ++i) {
            std::string fp = "fusion.stage" + std::to_string(i);
            FusionStage fs;
            int fc = cfg.fusion_channels_for(i);
            int sq = squeezed[static_cast<std::size_t>(i)];
            int bc = cfg.profile.channels[static_cast<std::size_t>(i)];
            fs.w_w = store.add(fp + ".gate.weight",
                               init_trunc_normal<T>({fc, sq, 1, 1}, seed, fp + ".gate.weight"));
            fs.w_b = store.add(fp + ".gate.bias", Tensor<T>({fc}));
            fs.b_w = store.add(fp + ".inject.weight",
                               init_trunc_normal<T>({fc, sq, 1, 1}, seed, fp + ".inject.weight"));
            fs.b_b = store.add(fp + ".inject.bias", Tensor<T>({fc}));
            fs.proj_w = store.add(fp + ".proj.weight",
                                  init_trunc_normal<T>({fc, bc, 1, 1}, seed, fp + ".proj.weight"));
            fs.proj_b = store.add(fp + ".proj.bias", Tensor<T>({fc}));
            model.fusion_.push_back(fs);
        }
    }
    return model;
}

template <typename T>
void MscsaModel<T>::check_pyramid(const StagePyramid<T>& pyr) const {
    pyr.validate();
    if (static_cast<int>(pyr.stages.size()) != cfg_.profile.num_stages()) {
        throw ShapeError("pyramid: stage count " + std::to_string(pyr.stages.size()) +
                         " does not match profile " + std::to_string(cfg_.profile.num_stages()));
    }
    auto sizes = cfg_.stage_sizes();
    for (std::size_t i = 0; i < pyr.stages.size(); ++i) {
        const auto& f = pyr.stages[i].feat;
        if (f.dim(1) != cfg_.profile.channels[i] || f.dim(2) != sizes[i].first ||
            f.dim(3) != sizes[i].second) {
            throw ShapeError("pyramid: stage " + std::to_string(i) + " is " + f.dims_str() +
                             ", expected channels " + std::to_string(cfg_.profile.channels[i]) +
                             " at " + std::to_string(sizes[i].first) + "x" +
                             std::to_string(sizes[i].second));
        }
    }
}

template <typename T>
std::vector<int> MscsaModel<T>::stage_input_nodes(Ctx<T>& ctx, const StagePyramid<T>& pyr,
                                                  bool requires_grad) const {
    check_pyramid(pyr);
    std::vector<int> nodes;
    for (const auto& s : pyr.stages) nodes.push_back(ctx.tape.input(s.feat, requires_grad));
    return nodes;
}

template <typename T>
int MscsaModel<T>::aggregate(Ctx<T>& ctx, const std::vector<int>& stage_nodes) const {
    if (stage_nodes.size() != static_cast<std::size_t>(cfg_.profile.num_stages())) {
        throw ShapeError("aggregate: wrong number of stage nodes");
    }
    int th = cfg_.pooled_h(), tw = cfg_.pooled_w();
    std::vector<int> pooled;
    for (std::size_t i = 0; i < stage_nodes.size(); ++i) {
        int x = stage_nodes[i];
        const auto& d = ctx.tape.value(x).dims();
        if (d[2] != th || d[3] != tw) {
            x = ctx.tape.adaptive_avg_pool(x, th, tw);
        }
        if (!squeeze_w_.empty()) {
            ConvSpec pw = ConvSpec::pointwise();
            x = ctx.tape.conv2d(x, ctx.param_nodes[static_cast<std::size_t>(squeeze_w_[i])],
                                ctx.param_nodes[static_cast<std::size_t>(squeeze_b_[i])], pw);
        }
        pooled.push_back(x);
    }
    return pooled.size() == 1 ? pooled[0] : ctx.tape.concat_dim1(pooled);
}

template <typename T>
int MscsaModel<T>::blocks_forward(Ctx<T>& ctx, int x) const {
    for (const Block& blk : blocks_) {
        x = ctx.tape.add(x, blk.csa0.forward(ctx, x));
        x = ctx.tape.add(x, blk.intra.forward(ctx, x));
        x = ctx.tape.add(x, blk.csa1.forward(ctx, x));
        x = ctx.tape.add(x, blk.ffn.forward(ctx, x));
    }
    return x;
}

template <typename T>
int MscsaModel<T>::classify(Ctx<T>& ctx, int x) const {
    if (cfg_.variant != Variant::Classification) {
        throw ContractError("classify: model built for the dense variant");
    }
    const auto& d = ctx.tape.value(x).dims();
    int pooled = ctx.tape.adaptive_avg_pool(x, 1, 1);
    ConvSpec pw = ConvSpec::pointwise();
    int logits = ctx.tape.conv2d(pooled, ctx.param_nodes[static_cast<std::size_t>(head_w_)],
                                 ctx.param_nodes[static_cast<std::size_t>(head_b_)], pw);
    return ctx.tape.reshape(logits, {d[0], cfg_.num_classes});
}

template <typename T>
std::vector<int> MscsaModel<T>::dense_fuse(Ctx<T>& ctx, int x,
                                           const std::vector<int>& stage_nodes) const {
    if (cfg_.variant != Variant::Dense) {
        throw ContractError("dense_fuse: model built for the classification variant");
    }
    std::vector<int> squeezed = cfg_.squeezed_channels();
    ConvSpec pw = ConvSpec::pointwise();
    std::vector<int> fused;
    int start = 0;
    for (std::size_t i = 0; i < stage_nodes.size(); ++i) {
        int chunk = ctx.tape.slice_dim1(x, start, squeezed[i]);
        start += squeezed[i];
        const auto& sd = ctx.tape.value(stage_nodes[i]).dims();
        int up = ctx.tape.upsample_bilinear(chunk, sd[2], sd[3]);
        if (ctx.tape.value(up).dim(2) != sd[2] || ctx.tape.value(up).dim(3) != sd[3]) {
            throw ShapeError("dense_fuse: upsample produced a mismatched resolution");
        }
        const FusionStage& fs = fusion_[i];
        int gate = ctx.tape.sigmoid(
            ctx.tape.conv2d(up, ctx.param_nodes[static_cast<std::size_t>(fs.w_w)],
                            ctx.param_nodes[static_cast<std::size_t>(fs.w_b)], pw));
        int inject = ctx.tape.conv2d(up, ctx.param_nodes[static_cast<std::size_t>(fs.b_w)],
                                     ctx.param_nodes[static_cast<std::size_t>(fs.b_b)], pw);
        int proj = ctx.tape.conv2d(stage_nodes[i],
                                   ctx.param_nodes[static_cast<std::size_t>(fs.proj_w)],
                                   ctx.param_nodes[static_cast<std::size_t>(fs.proj_b)], pw);
        fused.push_back(ctx.tape.add(ctx.tape.mul(proj, gate), inject));
    }
    return fused;
}

template <typename T>
Tensor<T> MscsaModel<T>::forward_logits(const StagePyramid<T>& pyr) {
    Tape<T> tape;
    std::vector<int> pn = register_params(tape, store_);
    Ctx<T> ctx{tape, store_, pn, false};
    std::vector<int> stages = stage_input_nodes(ctx, pyr);
    int x = aggregate(ctx, stages);
    x = blocks_forward(ctx, x);
    int logits = classify(ctx, x);
    return tape.value(logits);
}

template <typename T>
std::vector<Tensor<T>> MscsaModel<T>::forward_dense(const StagePyramid<T>& pyr) {
    Tape<T> tape;
    std::vector<int> pn = register_params(tape, store_);
    Ctx<T> ctx{tape, store_, pn, false};
    std::vector<int> stages = stage_input_nodes(ctx, pyr);
    int x = aggregate(ctx, stages);
    x = blocks_forward(ctx, x);
    std::vector<int> fused = dense_fuse(ctx, x, stages);
    std::vector<Tensor<T>> out;
    for (int f : fused) out.push_back(tape.value(f));
    return out;
}

template <typename T>
T MscsaModel<T>::forward_loss(const StagePyramid<T>& pyr, const std::vector<int>& labels) {
    Tape<T> tape;
    std::vector<int> pn = register_params(tape, store_);
    Ctx<T> ctx{tape, store_, pn, false};
    std::vector<int> stages = stage_input_nodes(ctx, pyr);
    int x = aggregate(ctx, stages);
    x = blocks_forward(ctx, x);
    int logits = classify(ctx, x);
    return tape.value(loss(ctx, logits, labels))[0];
}

template <typename T>
void zero_branch_projections(ParamStore<T>& store) {
    auto ends_with = [](const std::string& s, const std::string& suffix) {
        return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    for (auto& e : store.entries()) {
        if (e.name.rfind("block", 0) != 0) continue;
        if (ends_with(e.name, ".out.weight") || ends_with(e.name, ".out.bias") ||
            ends_with(e.name, ".project.weight") || ends_with(e.name, ".project.bias")) {
            for (std::int64_t i = 0; i < e.value.numel(); ++i) e.value[i] = T(0);
        }
    }
}

template <typename T>
void randomize_for_certification(ParamStore<T>& store, std::uint64_t seed) {
    for (auto& e : store.entries()) {
        if (!e.learnable) continue;
        Rng rng(Rng::mix(seed, Rng::hash_str(e.name)));
        auto ends_with = [&](const std::string& suf) {
            return e.name.size() >= suf.size() &&
                   e.name.compare(e.name.size() - suf.size(), suf.size(), suf) == 0;
        };
        if (ends_with(".weight") && e.value.rank() == 4) {
            double fan_in = static_cast<double>(e.value.dim(1)) * e.value.dim(2) * e.value.dim(3);
            double s = 1.0 / std::sqrt(fan_in);
            for (std::int64_t i = 0; i < e.value.numel(); ++i)
                e.value[i] = static_cast<T>(s * rng.normal());
        } else if (ends_with(".bias") || ends_with(".beta")) {
            for (std::int64_t i = 0; i < e.value.numel(); ++i)
                e.value[i] = static_cast<T>(0.15 * rng.normal());
        } else if (ends_with(".gamma")) {
            for (std::int64_t i = 0; i < e.value.numel(); ++i)
                e.value[i] = static_cast<T>(1.0 + 0.15 * rng.normal());
        }
    }
}

template <typename T>
std::vector<T> train_toy(MscsaModel<T>& model, const StagePyramid<T>& data,
                         const std::vector<int>& labels, int steps, T lr) {
    std::vector<T> losses;
    ParamStore<T>& store = model.params();
    for (int step = 0; step < steps; ++step) {
        Tape<T> tape;
        std::vector<int> pn = register_params(tape, store);
        Ctx<T> ctx{tape, store, pn, true};
        std::vector<int> stages = model.stage_input_nodes(ctx, data);
        int x = model.aggregate(ctx, stages);
        x = model.blocks_forward(ctx, x);
        int logits = model.classify(ctx, x);
        int l = model.loss(ctx, logits, labels);
        losses.push_back(tape.value(l)[0]);
        tape.backward(l);
        for (int i = 0; i < store.size(); ++i) {
            auto& entry = store.entries()[static_cast<std::size_t>(i)];
            if (!entry.learnable) continue;
            const Tensor<T>& g = tape.grad(pn[static_cast<std::size_t>(i)]);
            for (std::int64_t j = 0; j < entry.value.numel(); ++j) {
                entry.value[j] -= lr * g[j];
            }
        }
    }
    return losses;
}

namespace {

template <typename T>
Tensor<T> probe_weights(const std::vector<int>& dims, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<T> r(dims);
    for (std::int64_t i = 0; i < r.numel(); ++i) r[i] = static_cast<T>(0.7 * rng.normal());
    return r;
}

// scalar probe: sum(trunk .* r1) + sum(logits .* r2) on a fresh tape
template <typename T>
struct CertGraph {
    int loss = -1;
    std::vector<int> stage_nodes;
    std::vector<int> param_nodes;
};

template <typename T>
CertGraph<T> build_cert_graph(MscsaModel<T>& model, const StagePyramid<T>& pyr, Tape<T>& tape,
                              bool inputs_need_grad) {
    CertGraph<T> g;
    g.param_nodes = register_params(tape, model.params());
    Ctx<T> ctx{tape, model.params(), g.param_nodes, false};
    g.stage_nodes = model.stage_input_nodes(ctx, pyr, inputs_need_grad);
    int x = model.aggregate(ctx, g.stage_nodes);
    int trunk = model.blocks_forward(ctx, x);
    int logits = model.classify(ctx, trunk);
    int r1 = tape.input(probe_weights<T>(tape.value(trunk).dims(), 0xC0FFEEULL));
    int r2 = tape.input(probe_weights<T>(tape.value(logits).dims(), 0xBEEFULL));
    g.loss = tape.add(tape.reduce_sum(tape.mul(trunk, r1)),
                      tape.reduce_sum(tape.mul(logits, r2)));
    return g;
}

template <typename T>
T cert_value(MscsaModel<T>& model, const StagePyramid<T>& pyr) {
    Tape<T> tape;
    CertGraph<T> g = build_cert_graph(model, pyr, tape, false);
    return tape.value(g.loss)[0];
}

}  // namespace

template <typename T>
GradcheckResult<T> gradcheck_model(MscsaModel<T>& model, StagePyramid<T>& pyr, T h,
                                   int elements_per_tensor, bool check_inputs, T corrupt_delta) {
    ParamStore<T>& store = model.params();

    // analytic gradients, one eval-mode backward pass
    Tape<T> tape;
    CertGraph<T> graph = build_cert_graph(model, pyr, tape, true);
    std::vector<int>& pn = graph.param_nodes;
    std::vector<int>& stage_nodes = graph.stage_nodes;
    tape.backward(graph.loss);
    if (corrupt_delta != T(0) && !pn.empty()) tape.perturb_grad(pn[0], corrupt_delta);

    GradcheckResult<T> result;
    Rng pick(12345);

    // Per-tensor certification: the analytic and central-difference
    // gradients of each tensor are compared by max-norm,
    // |a - g|_inf / max(|a|_inf, |g|_inf, 1e-8). Element-level relative
    // comparison at f64 is dominated by evaluation rounding (~eps*|loss|/2h)
    // wherever a single gradient entry is near zero.
    auto check_tensor = [&](Tensor<T>& value, const Tensor<T>& analytic,
                            const std::string& name) {
        std::vector<std::int64_t> ids;
        if (elements_per_tensor <= 0 || value.numel() <= elements_per_tensor) {
            for (std::int64_t j = 0; j < value.numel(); ++j) ids.push_back(j);
        } else {
            for (int k = 0; k < elements_per_tensor; ++k) {
                ids.push_back(static_cast<std::int64_t>(
                    pick.next_u64() % static_cast<std::uint64_t>(value.numel())));
            }
        }
        T diff_norm = T(0), a_norm = T(0), fd_norm = T(0);
        for (std::int64_t j : ids) {
            T orig = value[j];
            T step = h * (std::abs(orig) + T(1));
            value[j] = orig + step;
            T fp = cert_value(model, pyr);
            value[j] = orig - step;
            T fm = cert_value(model, pyr);
            value[j] = orig;
            T fd = (fp - fm) / (T(2) * step);
            diff_norm = std::max(diff_norm, std::abs(fd - analytic[j]));
            a_norm = std::max(a_norm, std::abs(analytic[j]));
            fd_norm = std::max(fd_norm, std::abs(fd));
            ++result.checked_elements;
        }
        T rel = diff_norm / std::max({a_norm, fd_norm, static_cast<T>(1e-8)});
        if (rel > result.max_rel_err) {
            result.max_rel_err = rel;
            result.worst_name = name;
        }
    };

    for (int i = 0; i < store.size(); ++i) {
        auto& entry = store.entries()[static_cast<std::size_t>(i)];
        if (!entry.learnable) continue;
        check_tensor(entry.value, tape.grad(pn[static_cast<std::size_t>(i)]), entry.name);
    }

    if (check_inputs) {
        for (std::size_t si = 0; si < pyr.stages.size(); ++si) {
            check_tensor(pyr.stages[si].feat, tape.grad(stage_nodes[si]),
                         "input.stage" + std::to_string(si));
        }
    }
    return result;
}

#define MSCSA_INSTANTIATE_ASSEMBLY(T)                                                        \
    template struct StagePyramid<T>;                                                         \
    template StagePyramid<T> synth_pyramid<T>(const Profile&, int, std::uint64_t, int);      \
    template class MscsaModel<T>;                                                            \
    template void zero_branch_projections<T>(ParamStore<T>&);                                \
    template void randomize_for_certification<T>(ParamStore<T>&, std::uint64_t);             \
    template std::vector<T> train_toy<T>(MscsaModel<T>&, const StagePyramid<T>&,             \
                                         const std::vector<int>&, int, T);                   \
    template GradcheckResult<T> gradcheck_model<T>(MscsaModel<T>&, StagePyramid<T>&, T, int, \
                                                   bool, T);

MSCSA_INSTANTIATE_ASSEMBLY(float)
MSCSA_INSTANTIATE_ASSEMBLY(double)

#undef MSCSA_INSTANTIATE_ASSEMBLY

}  // namespace mscsa
