#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mscsa/blocks.hpp"

namespace mscsa {

// exact rational, written "p/q" or "p" in config files
struct Rational {
    long long num = 0;
    long long den = 1;

    static Rational parse(const std::string& s);
    double as_double() const { return static_cast<double>(num) / static_cast<double>(den); }
    std::string str() const;

    // n * num / den, required to be integral
    int apply_exact(int n, const std::string& what) const;
    bool divides_exactly(int n) const { return (static_cast<long long>(n) * num) % den == 0; }
};

struct Profile {
    std::vector<int> channels;
    std::vector<int> strides;
    int num_stages() const { return static_cast<int>(channels.size()); }
};

enum class Variant { Classification, Dense };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

struct MscsaConfig {
    Profile profile;
    int input_resolution = 224;
    Rational pool_target{1, 32};
    std::optional<Rational> squeeze_ratio;
    int depth = 1;
    int heads = 8;
    int head_dim = 24;
    Rational mlp_ratio{2, 1};
    DownsampleStrategy strategy = DownsampleStrategy::ParallelDwConv;
    Variant variant = Variant::Classification;
    int fusion_channels = 0;  // 0: per-stage squeezed channel count
    int num_classes = 1000;
    std::uint64_t seed = 0;

    void validate() const;

    int pooled_h() const { return pool_target.apply_exact(input_resolution, "pool_target"); }
    int pooled_w() const { return pooled_h(); }
    std::vector<int> squeezed_channels() const;
    int total_channels() const;
    std::vector<int> ffn_hiddens() const;       // per squeezed stage, mlp_ratio applied
    int trunk_hidden() const;                   // mlp_ratio over the concatenated width
    std::vector<std::pair<int, int>> stage_sizes() const;
    int fusion_channels_for(int stage) const;
};

// flat `key = value` file; `#` starts a comment, lists are space-separated
MscsaConfig parse_config_text(const std::string& text);
MscsaConfig load_config_file(const std::string& path);
std::string config_to_text(const MscsaConfig& cfg);  // canonical form
std::uint64_t config_hash(const MscsaConfig& cfg);

// built-in profiles used as CLI defaults
MscsaConfig builtin_mini_config();          // 2-stage gradcheck profile
MscsaConfig builtin_pvtv2_b1_mini_config(); // channels/8 toy-training profile

}  // namespace mscsa
