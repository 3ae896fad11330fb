#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "support/oracles.hpp"

using namespace mscsa;

namespace {

template <typename T>
Tensor<T> random_tensor(std::vector<int> dims, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Tensor<T> t(std::move(dims));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(scale * rng.normal());
    return t;
}

// gives biases, norm affines and running stats non-trivial values so the
// oracle comparison exercises every term
template <typename T>
void randomize_store(ParamStore<T>& store, std::uint64_t seed) {
    for (auto& e : store.entries()) {
        Rng rng(Rng::mix(seed, Rng::hash_str(e.name) ^ 0x5bd1e995ULL));
        auto ends_with = [&](const std::string& suf) {
            return e.name.size() >= suf.size() &&
                   e.name.compare(e.name.size() - suf.size(), suf.size(), suf) == 0;
        };
        if (ends_with(".running_var")) {
            for (std::int64_t i = 0; i < e.value.numel(); ++i)
                e.value[i] = static_cast<T>(1.0 + 0.3 * std::abs(rng.normal()));
        } else if (ends_with(".running_mean") || ends_with(".bias") || ends_with(".beta")) {
            for (std::int64_t i = 0; i < e.value.numel(); ++i)
                e.value[i] = static_cast<T>(0.15 * rng.normal());
        } else if (ends_with(".gamma")) {
            for (std::int64_t i = 0; i < e.value.numel(); ++i)
                e.value[i] = static_cast<T>(1.0 + 0.15 * rng.normal());
        }
    }
}

template <typename T>
Tensor<T> run_csa(ParamStore<T>& store, const CsaLayer<T>& layer, const Tensor<T>& x,
                  typename CsaLayer<T>::Options opt = {}) {
    Tape<T> tape;
    std::vector<int> pn = register_params(tape, store);
    Ctx<T> ctx{tape, store, pn, false};
    int xin = tape.input(x);
    return tape.value(layer.forward(ctx, xin, opt));
}

template <typename T>
Tensor<T> run_ffn(ParamStore<T>& store, const FfnLayer<T>& layer, const Tensor<T>& x) {
    Tape<T> tape;
    std::vector<int> pn = register_params(tape, store);
    Ctx<T> ctx{tape, store, pn, false};
    return tape.value(layer.forward(ctx, tape.input(x)));
}

template <typename T>
Tensor<T> run_intra(ParamStore<T>& store, const IntraFfnLayer<T>& layer, const Tensor<T>& x) {
    Tape<T> tape;
    std::vector<int> pn = register_params(tape, store);
    Ctx<T> ctx{tape, store, pn, false};
    return tape.value(layer.forward(ctx, tape.input(x)));
}

}  // namespace

TEST_CASE("token budget follows the floor formulas") {
    for (int h = 3; h <= 32; ++h) {
        for (int w = 3; w <= 32; ++w) {
            std::int64_t expect = static_cast<std::int64_t>(h) * w +
                                  static_cast<std::int64_t>(down2(h)) * down2(w) +
                                  static_cast<std::int64_t>(down3(h)) * down3(w);
            CHECK(kv_token_count(h, w, DownsampleStrategy::ParallelDwConv) == expect);
            CHECK(kv_token_count(h, w, DownsampleStrategy::AvgPool) == expect);
            CHECK(kv_token_count(h, w, DownsampleStrategy::SingleDwConv) ==
                  static_cast<std::int64_t>(h) * w +
                      static_cast<std::int64_t>(down2(h)) * down2(w));
        }
    }
    // the 7x7 case: 49 + 16 + 9
    CHECK(kv_token_count(7, 7, DownsampleStrategy::ParallelDwConv) == 74);
}

TEST_CASE("csa matches the straight-line oracle on every strategy (f64)") {
    for (DownsampleStrategy s :
         {DownsampleStrategy::ParallelDwConv, DownsampleStrategy::AvgPool,
          DownsampleStrategy::CascadeDwConv, DownsampleStrategy::SingleDwConv}) {
        ParamStore<double> store;
        CsaLayer<double> layer = CsaLayer<double>::create(store, "csa", 4, 2, 2, s, 100);
        randomize_store(store, 200);
        Tensor<double> x = random_tensor<double>({2, 4, 5, 5}, 300);
        Tensor<double> y = run_csa(store, layer, x);
        REQUIRE(y.dims() == x.dims());
        for (int n = 0; n < 2; ++n) {
            oracle::Map<double> xm = oracle::slice_sample(x, n);
            oracle::Map<double> om = oracle::csa_forward(xm, store, "csa", 2, 2, s);
            CHECK(oracle::max_abs_diff(om, y, n) < 1e-12);
        }
    }
}

TEST_CASE("csa matches the straight-line oracle (f32)") {
    ParamStore<float> store;
    CsaLayer<float> layer =
        CsaLayer<float>::create(store, "csa", 4, 2, 2, DownsampleStrategy::ParallelDwConv, 100);
    randomize_store(store, 200);
    Tensor<float> x = random_tensor<float>({1, 4, 5, 5}, 300);
    Tensor<float> y = run_csa(store, layer, x);
    oracle::Map<float> xm = oracle::slice_sample(x, 0);
    oracle::Map<float> om =
        oracle::csa_forward(xm, store, "csa", 2, 2, DownsampleStrategy::ParallelDwConv);
    CHECK(oracle::max_abs_diff(om, y, 0) < 1e-6f);
}

TEST_CASE("csa identity-like single-head toy case agrees with the oracle") {
    // c = 2, one head, d = 2: q/k projections are the identity, v stacks
    // the identity twice
    ParamStore<double> store;
    CsaLayer<double> layer =
        CsaLayer<double>::create(store, "csa", 2, 1, 2, DownsampleStrategy::ParallelDwConv, 1);
    auto set = [&](const std::string& name, std::vector<double> v) {
        Tensor<double>& t = store.value(store.index_of(name));
        REQUIRE(t.numel() == static_cast<std::int64_t>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) t[static_cast<std::int64_t>(i)] = v[i];
    };
    set("csa.q.weight", {1, 0, 0, 1});
    for (int i = 0; i < 3; ++i) {
        set("csa.k" + std::to_string(i) + ".weight", {1, 0, 0, 1});
        set("csa.v" + std::to_string(i) + ".weight", {1, 0, 0, 1, 1, 0, 0, 1});
    }
    // center-tap depthwise kernels
    set("csa.down1.weight", {0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0});
    set("csa.down2.weight", {0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0});
    set("csa.pcp.weight", std::vector<double>(36, 0.0));
    Tensor<double>& pcp = store.value(store.index_of("csa.pcp.weight"));
    for (int c = 0; c < 4; ++c) pcp.at4(c, 0, 1, 1) = 1.0;  // identity conv path
    Tensor<double>& ow = store.value(store.index_of("csa.out.weight"));
    for (std::int64_t i = 0; i < ow.numel(); ++i) ow[i] = 0.0;
    ow.at4(0, 0, 0, 0) = 1.0;
    ow.at4(1, 1, 0, 0) = 1.0;

    Tensor<double> x = random_tensor<double>({1, 2, 3, 3}, 5);
    Tensor<double> y = run_csa(store, layer, x);
    oracle::Map<double> om = oracle::csa_forward(oracle::slice_sample(x, 0), store, "csa", 1, 2,
                                                 DownsampleStrategy::ParallelDwConv);
    CHECK(oracle::max_abs_diff(om, y, 0) < 1e-12);
}

TEST_CASE("csa rejects maps smaller than 3x3 and names the minimum") {
    ParamStore<double> store;
    CsaLayer<double> layer =
        CsaLayer<double>::create(store, "csa", 4, 2, 2, DownsampleStrategy::ParallelDwConv, 1);
    Tensor<double> x({1, 4, 2, 5});
    Tape<double> tape;
    std::vector<int> pn = register_params(tape, store);
    Ctx<double> ctx{tape, store, pn, false};
    int xin = tape.input(x);
    CHECK_THROWS_WITH_AS(layer.forward(ctx, xin), doctest::Contains("3x3"), ConfigError);
}

TEST_CASE("ffn matches the loop oracle and preserves shape") {
    ParamStore<double> store;
    FfnLayer<double> layer = FfnLayer<double>::create(store, "ffn", 4, 8, 42);
    randomize_store(store, 43);
    Tensor<double> x = random_tensor<double>({1, 4, 3, 3}, 44);
    Tensor<double> y = run_ffn(store, layer, x);
    REQUIRE(y.dims() == x.dims());
    oracle::Map<double> om = oracle::ffn_forward(oracle::slice_sample(x, 0), store, "ffn");
    CHECK(oracle::max_abs_diff(om, y, 0) < 1e-12);

    // f32 flavor
    ParamStore<float> store_f;
    FfnLayer<float> layer_f = FfnLayer<float>::create(store_f, "ffn", 4, 8, 42);
    randomize_store(store_f, 43);
    Tensor<float> xf = random_tensor<float>({1, 4, 3, 3}, 44);
    Tensor<float> yf = run_ffn(store_f, layer_f, xf);
    oracle::Map<float> omf = oracle::ffn_forward(oracle::slice_sample(xf, 0), store_f, "ffn");
    CHECK(oracle::max_abs_diff(omf, yf, 0) < 1e-6f);
}

TEST_CASE("ffn with zero weights returns zero") {
    ParamStore<double> store;
    FfnLayer<double> layer = FfnLayer<double>::create(store, "ffn", 3, 6, 1);
    for (auto& e : store.entries()) {
        if (e.name.find(".weight") != std::string::npos || e.name.find(".bias") != std::string::npos) {
            for (std::int64_t i = 0; i < e.value.numel(); ++i) e.value[i] = 0.0;
        }
    }
    Tensor<double> x = random_tensor<double>({2, 3, 4, 4}, 2);
    Tensor<double> y = run_ffn(store, layer, x);
    for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == 0.0);
}

TEST_CASE("ffn shape preserved across random sizes") {
    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        int c = 2 + static_cast<int>(rng.next_u64() % 5);
        int h = 3 + static_cast<int>(rng.next_u64() % 6);
        int w = 3 + static_cast<int>(rng.next_u64() % 6);
        ParamStore<double> store;
        FfnLayer<double> layer = FfnLayer<double>::create(store, "ffn", c, 2 * c, 9);
        Tensor<double> x = random_tensor<double>({1, c, h, w}, 10 + trial);
        CHECK(run_ffn(store, layer, x).dims() == x.dims());
    }
}

TEST_CASE("intra-ffn matches the loop oracle and the channel split") {
    std::vector<int> splits = {2, 3, 4};
    std::vector<int> hiddens = {4, 6, 8};
    ParamStore<double> store;
    IntraFfnLayer<double> layer = IntraFfnLayer<double>::create(store, "intra", splits, hiddens, 5);
    randomize_store(store, 6);
    Tensor<double> x = random_tensor<double>({2, 9, 4, 4}, 7);
    Tensor<double> y = run_intra(store, layer, x);
    REQUIRE(y.dims() == x.dims());
    for (int n = 0; n < 2; ++n) {
        oracle::Map<double> om =
            oracle::intra_ffn_forward(oracle::slice_sample(x, n), store, "intra", splits);
        CHECK(oracle::max_abs_diff(om, y, n) < 1e-12);
    }

    // channel-count mismatch is a shape error
    Tensor<double> bad = random_tensor<double>({1, 8, 4, 4}, 8);
    Tape<double> tape;
    std::vector<int> pn = register_params(tape, store);
    Ctx<double> ctx{tape, store, pn, false};
    CHECK_THROWS_AS(layer.forward(ctx, tape.input(bad)), ShapeError);
}

TEST_CASE("intra-ffn stages are independent") {
    std::vector<int> splits = {2, 3, 4};
    std::vector<int> hiddens = {4, 6, 8};
    ParamStore<double> store;
    IntraFfnLayer<double> layer = IntraFfnLayer<double>::create(store, "intra", splits, hiddens, 5);
    randomize_store(store, 6);
    Tensor<double> x = random_tensor<double>({1, 9, 4, 4}, 7);
    Tensor<double> y0 = run_intra(store, layer, x);
    // perturb stage-1 channels (indices 2..4); stages 0 and 2 must not move
    Tensor<double> x2 = x;
    for (int c = 2; c < 5; ++c)
        for (int h = 0; h < 4; ++h)
            for (int w = 0; w < 4; ++w) x2.at4(0, c, h, w) += 0.5;
    Tensor<double> y1 = run_intra(store, layer, x2);
    for (int c = 0; c < 9; ++c) {
        bool stage1 = c >= 2 && c < 5;
        for (int h = 0; h < 4; ++h) {
            for (int w = 0; w < 4; ++w) {
                if (stage1) continue;
                CHECK(std::memcmp(&y0.at4(0, c, h, w), &y1.at4(0, c, h, w), sizeof(double)) == 0);
            }
        }
    }
}

TEST_CASE("single-stage intra-ffn equals a plain ffn bit for bit") {
    ParamStore<double> store;
    IntraFfnLayer<double> intra = IntraFfnLayer<double>::create(store, "intra", {5}, {10}, 11);
    FfnLayer<double> ffn = FfnLayer<double>::create(store, "ffn", 5, 10, 11);
    randomize_store(store, 12);
    // copy the intra stage-0 params onto the plain ffn
    for (auto& e : store.entries()) {
        if (e.name.rfind("intra.stage0.", 0) == 0) {
            std::string other = "ffn." + e.name.substr(std::string("intra.stage0.").size());
            Tensor<double>& dst = store.value(store.index_of(other));
            dst = e.value;
        }
    }
    Tensor<double> x = random_tensor<double>({2, 5, 4, 4}, 13);
    Tensor<double> yi = run_intra(store, intra, x);
    Tensor<double> yf = run_ffn(store, ffn, x);
    CHECK(std::memcmp(yi.data(), yf.data(), sizeof(double) * yi.numel()) == 0);
}

TEST_CASE("pcp locality: a pixel change only reaches its 3x3 neighborhood") {
    ParamStore<double> store;
    CsaLayer<double> layer =
        CsaLayer<double>::create(store, "csa", 4, 2, 2, DownsampleStrategy::ParallelDwConv, 21);
    randomize_store(store, 22);
    typename CsaLayer<double>::Options opt;
    opt.use_attention = false;  // conv path only
    Tensor<double> x = random_tensor<double>({1, 4, 7, 7}, 23);
    Tensor<double> y0 = run_csa(store, layer, x, opt);
    Tensor<double> x2 = x;
    const int py = 2, px = 5;
    for (int c = 0; c < 4; ++c) x2.at4(0, c, py, px) += 1.0;
    Tensor<double> y1 = run_csa(store, layer, x2, opt);
    for (int c = 0; c < 4; ++c) {
        for (int h = 0; h < 7; ++h) {
            for (int w = 0; w < 7; ++w) {
                bool neighborhood = std::abs(h - py) <= 1 && std::abs(w - px) <= 1;
                if (!neighborhood) {
                    CHECK(y0.at4(0, c, h, w) == y1.at4(0, c, h, w));
                }
            }
        }
    }
}

TEST_CASE("batch permutation equivariance in eval mode") {
    ParamStore<double> store;
    CsaLayer<double> layer =
        CsaLayer<double>::create(store, "csa", 4, 2, 2, DownsampleStrategy::ParallelDwConv, 31);
    randomize_store(store, 32);
    Tensor<double> a = random_tensor<double>({1, 4, 5, 5}, 33);
    Tensor<double> b = random_tensor<double>({1, 4, 5, 5}, 34);
    auto stack = [&](const Tensor<double>& first, const Tensor<double>& second) {
        Tensor<double> out({2, 4, 5, 5});
        std::memcpy(out.data(), first.data(), sizeof(double) * first.numel());
        std::memcpy(out.data() + first.numel(), second.data(), sizeof(double) * second.numel());
        return out;
    };
    Tensor<double> yab = run_csa(store, layer, stack(a, b));
    Tensor<double> yba = run_csa(store, layer, stack(b, a));
    std::int64_t half = yab.numel() / 2;
    CHECK(std::memcmp(yab.data(), yba.data() + half, sizeof(double) * half) == 0);
    CHECK(std::memcmp(yab.data() + half, yba.data(), sizeof(double) * half) == 0);
}

namespace {

// max relative error over every learnable element of d(sum(y * r))/d(theta)
// against central differences, where y = forward(x) on a fresh tape
template <typename Forward>
double store_gradcheck(ParamStore<double>& store, const Tensor<double>& x, Forward forward,
                       std::uint64_t rseed) {
    Tensor<double> r;
    auto loss_value = [&]() {
        Tape<double> tape;
        std::vector<int> pn = register_params(tape, store);
        Ctx<double> ctx{tape, store, pn, false};
        int y = forward(ctx, tape.input(x));
        if (r.numel() == 0) r = random_tensor<double>(tape.value(y).dims(), rseed, 0.7);
        int l = tape.reduce_sum(tape.mul(y, tape.input(r)));
        return std::pair<double, Tape<double>*>(tape.value(l)[0], nullptr);
    };
    // analytic pass
    Tape<double> tape;
    std::vector<int> pn = register_params(tape, store);
    Ctx<double> ctx{tape, store, pn, false};
    int y = forward(ctx, tape.input(x));
    r = random_tensor<double>(tape.value(y).dims(), rseed, 0.7);
    int l = tape.reduce_sum(tape.mul(y, tape.input(r)));
    tape.backward(l);

    double worst = 0;
    for (int i = 0; i < store.size(); ++i) {
        auto& e = store.entries()[static_cast<std::size_t>(i)];
        if (!e.learnable) continue;
        const Tensor<double>& g = tape.grad(pn[static_cast<std::size_t>(i)]);
        for (std::int64_t j = 0; j < e.value.numel(); ++j) {
            double orig = e.value[j];
            double step = 1e-4 * (std::abs(orig) + 1.0);
            e.value[j] = orig + step;
            double fp = loss_value().first;
            e.value[j] = orig - step;
            double fm = loss_value().first;
            e.value[j] = orig;
            double fd = (fp - fm) / (2 * step);
            double denom = std::max({std::abs(fd), std::abs(g[j]), 1e-8});
            worst = std::max(worst, std::abs(fd - g[j]) / denom);
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("layer gradcheck: every csa parameter tensor passes at 1e-4") {
    ParamStore<double> store;
    CsaLayer<double> csa =
        CsaLayer<double>::create(store, "csa", 4, 2, 2, DownsampleStrategy::ParallelDwConv, 41);
    randomize_store(store, 44);
    Tensor<double> x = random_tensor<double>({1, 4, 5, 5}, 45);
    double worst = store_gradcheck(store, x, [&](Ctx<double>& c, int xin) {
        return csa.forward(c, xin);
    }, 46);
    CHECK(worst < 1e-4);
}

TEST_CASE("layer gradcheck: every ffn parameter tensor passes at 1e-4") {
    ParamStore<double> store;
    FfnLayer<double> ffn = FfnLayer<double>::create(store, "ffn", 4, 8, 42);
    randomize_store(store, 47);
    Tensor<double> x = random_tensor<double>({1, 4, 5, 5}, 48);
    double worst = store_gradcheck(store, x, [&](Ctx<double>& c, int xin) {
        return ffn.forward(c, xin);
    }, 49);
    CHECK(worst < 1e-4);
}

TEST_CASE("layer gradcheck: every intra-ffn parameter tensor passes at 1e-4") {
    ParamStore<double> store;
    IntraFfnLayer<double> intra = IntraFfnLayer<double>::create(store, "intra", {2, 2}, {4, 4}, 43);
    randomize_store(store, 50);
    Tensor<double> x = random_tensor<double>({1, 4, 5, 5}, 51);
    double worst = store_gradcheck(store, x, [&](Ctx<double>& c, int xin) {
        return intra.forward(c, xin);
    }, 52);
    CHECK(worst < 1e-4);
}
