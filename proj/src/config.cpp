#include "mscsa/config.hpp"

#include <fstream>
#include <sstream>

#include "mscsa/rng.hpp"

namespace mscsa {

Rational Rational::parse(const std::string& s) {
    Rational r;
    auto slash = s.find('/');
    try {
        if (slash == std::string::npos) {
            r.num = std::stoll(s);
            r.den = 1;
        } else {
            r.num = std::stoll(s.substr(0, slash));
            r.den = std::stoll(s.substr(slash + 1));
        }
    } catch (const std::exception&) {
        throw ConfigError("bad rational: " + s);
    }
    if (r.den <= 0) throw ConfigError("bad rational denominator: " + s);
    return r;
}

std::string Rational::str() const {
    if (den == 1) return std::to_string(num);
    return std::to_string(num) + "/" + std::to_string(den);
}

int Rational::apply_exact(int n, const std::string& what) const {
    long long p = static_cast<long long>(n) * num;
    if (p % den != 0) {
        throw ConfigError(what + ": " + str() + " of " + std::to_string(n) +
                          " is not an integer");
    }
    long long v = p / den;
    if (v < 1) throw ConfigError(what + ": result " + std::to_string(v) + " must be >= 1");
    return static_cast<int>(v);
}

Variant variant_from_string(const std::string& s) {
    if (s == "classification") return Variant::Classification;
    if (s == "dense") return Variant::Dense;
    throw ConfigError("unknown variant: " + s);
}

std::string to_string(Variant v) {
    return v == Variant::Classification ? "classification" : "dense";
}

void MscsaConfig::validate() const {
    if (profile.channels.empty() || profile.channels.size() != profile.strides.size()) {
        throw ConfigError("profile.channels and profile.strides must be non-empty, equal length");
    }
    for (std::size_t i = 0; i < profile.strides.size(); ++i) {
        if (profile.channels[i] < 1) throw ConfigError("profile.channels must be positive");
        if (profile.strides[i] < 1) throw ConfigError("profile.strides must be positive");
        if (i > 0 && profile.strides[i] <= profile.strides[i - 1]) {
            throw ConfigError("profile.strides must be strictly increasing");
        }
        if (input_resolution % profile.strides[i] != 0) {
            throw ConfigError("input_resolution " + std::to_string(input_resolution) +
                              " not divisible by stride " + std::to_string(profile.strides[i]));
        }
    }
    if (depth < 0) throw ConfigError("depth must be >= 0");
    if (heads < 1 || head_dim < 1) throw ConfigError("heads and head_dim must be >= 1");
    if (mlp_ratio.num <= 0) throw ConfigError("mlp_ratio must be positive");
    int ph = pooled_h();
    if (ph < 3) {
        throw ConfigError("pooled size " + std::to_string(ph) + " too small; minimum is 3x3");
    }
    int c = total_channels();
    if (c % heads != 0) {
        throw ConfigError("aggregated channels " + std::to_string(c) +
                          " not divisible by heads " + std::to_string(heads));
    }
    ffn_hiddens();
    trunk_hidden();
    if (variant == Variant::Classification && num_classes < 2) {
        throw ConfigError("num_classes must be >= 2");
    }
    if (fusion_channels < 0) throw ConfigError("fusion_channels must be >= 0");
}

std::vector<int> MscsaConfig::squeezed_channels() const {
    std::vector<int> out;
    for (int c : profile.channels) {
        out.push_back(squeeze_ratio ? squeeze_ratio->apply_exact(c, "squeeze_ratio") : c);
    }
    return out;
}

int MscsaConfig::total_channels() const {
    int total = 0;
    for (int c : squeezed_channels()) total += c;
    return total;
}

std::vector<int> MscsaConfig::ffn_hiddens() const {
    std::vector<int> out;
    for (int c : squeezed_channels()) out.push_back(mlp_ratio.apply_exact(c, "mlp_ratio"));
    return out;
}

int MscsaConfig::trunk_hidden() const {
    return mlp_ratio.apply_exact(total_channels(), "mlp_ratio");
}

std::vector<std::pair<int, int>> MscsaConfig::stage_sizes() const {
    std::vector<std::pair<int, int>> out;
    for (int s : profile.strides) {
        out.push_back({input_resolution / s, input_resolution / s});
    }
    return out;
}

int MscsaConfig::fusion_channels_for(int stage) const {
    if (fusion_channels > 0) return fusion_channels;
    return squeezed_channels()[static_cast<std::size_t>(stage)];
}

namespace {

std::vector<int> parse_int_list(const std::string& s) {
    std::istringstream is(s);
    std::vector<int> out;
    int v = 0;
    while (is >> v) out.push_back(v);
    if (out.empty()) throw ConfigError("expected integer list, got: " + s);
    return out;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

MscsaConfig parse_config_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty()) {
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
        }
        if (kv.count(key)) throw ConfigError("config: duplicate key " + key);
        kv[key] = val;
    }

    MscsaConfig cfg;
    auto take = [&kv](const std::string& key) -> std::optional<std::string> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        std::string v = it->second;
        kv.erase(it);
        return v;
    };

    if (auto v = take("profile.channels")) cfg.profile.channels = parse_int_list(*v);
    else throw ConfigError("config: missing profile.channels");
    if (auto v = take("profile.strides")) cfg.profile.strides = parse_int_list(*v);
    else throw ConfigError("config: missing profile.strides");
    if (auto v = take("input_resolution")) cfg.input_resolution = std::stoi(*v);
    if (auto v = take("pool_target")) cfg.pool_target = Rational::parse(*v);
    if (auto v = take("squeeze_ratio")) {
        if (*v != "-" && *v != "none") cfg.squeeze_ratio = Rational::parse(*v);
    }
    if (auto v = take("depth")) cfg.depth = std::stoi(*v);
    if (auto v = take("heads")) cfg.heads = std::stoi(*v);
    if (auto v = take("head_dim")) cfg.head_dim = std::stoi(*v);
    if (auto v = take("mlp_ratio")) cfg.mlp_ratio = Rational::parse(*v);
    if (auto v = take("strategy")) cfg.strategy = strategy_from_string(*v);
    if (auto v = take("variant")) cfg.variant = variant_from_string(*v);
    if (auto v = take("fusion_channels")) cfg.fusion_channels = std::stoi(*v);
    if (auto v = take("num_classes")) cfg.num_classes = std::stoi(*v);
    if (auto v = take("seed")) cfg.seed = std::stoull(*v);

    if (!kv.empty()) throw ConfigError("config: unknown key " + kv.begin()->first);
    cfg.validate();
    return cfg;
}

MscsaConfig load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_config_text(buf.str());
}

std::string config_to_text(const MscsaConfig& cfg) {
    std::ostringstream os;
    os << "profile.channels =";
    for (int c : cfg.profile.channels) os << " " << c;
    os << "\nprofile.strides =";
    for (int s : cfg.profile.strides) os << " " << s;
    os << "\ninput_resolution = " << cfg.input_resolution;
    os << "\npool_target = " << cfg.pool_target.str();
    os << "\nsqueeze_ratio = " << (cfg.squeeze_ratio ? cfg.squeeze_ratio->str() : "-");
    os << "\ndepth = " << cfg.depth;
    os << "\nheads = " << cfg.heads;
    os << "\nhead_dim = " << cfg.head_dim;
    os << "\nmlp_ratio = " << cfg.mlp_ratio.str();
    os << "\nstrategy = " << to_string(cfg.strategy);
    os << "\nvariant = " << to_string(cfg.variant);
    os << "\nfusion_channels = " << cfg.fusion_channels;
    os << "\nnum_classes = " << cfg.num_classes;
    os << "\nseed = " << cfg.seed;
    os << "\n";
    return os.str();
}

std::uint64_t config_hash(const MscsaConfig& cfg) {
    return Rng::hash_str(config_to_text(cfg));
}

MscsaConfig builtin_mini_config() {
    MscsaConfig cfg;
    cfg.profile.channels = {8, 16};
    cfg.profile.strides = {4, 8};
    cfg.input_resolution = 48;
    cfg.pool_target = Rational{1, 8};
    cfg.squeeze_ratio.reset();
    cfg.depth = 1;
    cfg.heads = 2;
    cfg.head_dim = 4;
    cfg.mlp_ratio = Rational{2, 1};
    cfg.strategy = DownsampleStrategy::ParallelDwConv;
    cfg.variant = Variant::Classification;
    cfg.num_classes = 2;
    cfg.seed = 7;
    cfg.validate();
    return cfg;
}

MscsaConfig builtin_pvtv2_b1_mini_config() {
    MscsaConfig cfg;
    cfg.profile.channels = {8, 16, 40, 64};
    cfg.profile.strides = {4, 8, 16, 32};
    cfg.input_resolution = 224;
    cfg.pool_target = Rational{1, 32};
    cfg.squeeze_ratio = Rational{5, 8};
    cfg.depth = 1;
    cfg.heads = 8;
    cfg.head_dim = 3;
    cfg.mlp_ratio = Rational{2, 1};
    cfg.strategy = DownsampleStrategy::ParallelDwConv;
    cfg.variant = Variant::Classification;
    cfg.num_classes = 2;
    cfg.seed = 7;
    cfg.validate();
    return cfg;
}

}  // namespace mscsa
