#include "mscsa/params.hpp"

#include <fstream>

#include <json.hpp>

#include "mscsa/tensor_io.hpp"

namespace mscsa {

using nlohmann::json;

template <typename T>
int ParamStore<T>::add(const std::string& name, Tensor<T> value, bool learnable) {
    if (lookup_.count(name)) throw ConfigError("param store: duplicate name " + name);
    entries_.push_back(Entry{name, std::move(value), learnable});
    int idx = static_cast<int>(entries_.size() - 1);
    lookup_[name] = idx;
    return idx;
}

template <typename T>
int ParamStore<T>::index_of(const std::string& name) const {
    auto it = lookup_.find(name);
    if (it == lookup_.end()) throw ConfigError("param store: unknown name " + name);
    return it->second;
}

template <typename T>
std::int64_t ParamStore<T>::total_elements() const {
    std::int64_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
}

template <typename T>
std::int64_t ParamStore<T>::learnable_elements() const {
    std::int64_t n = 0;
    for (const auto& e : entries_) {
        if (e.learnable) n += e.value.numel();
    }
    return n;
}

template <typename T>
std::int64_t ParamStore<T>::elements_with_prefix(const std::string& prefix) const {
    std::int64_t n = 0;
    for (const auto& e : entries_) {
        if (e.name.rfind(prefix, 0) == 0) n += e.value.numel();
    }
    return n;
}

template <typename T>
Tensor<T> init_trunc_normal(const std::vector<int>& dims, std::uint64_t seed,
                            const std::string& name, double std_dev) {
    Rng rng(Rng::mix(seed, Rng::hash_str(name)));
    Tensor<T> t(dims);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.trunc_normal(std_dev));
    return t;
}

template <typename T>
void save_checkpoint(const ParamStore<T>& store, const std::string& stem) {
    if (store.total_elements() == 0) throw ConfigError("checkpoint: nothing to save");
    Tensor<T> flat({static_cast<int>(store.total_elements())});
    json manifest = json::array();
    std::int64_t off = 0;
    for (const auto& e : store.entries()) {
        manifest.push_back({{"name", e.name},
                            {"dims", e.value.dims()},
                            {"dtype", std::is_same_v<T, float> ? "f32" : "f64"},
                            {"byte_offset", off * static_cast<std::int64_t>(sizeof(T))},
                            {"learnable", e.learnable}});
        for (std::int64_t i = 0; i < e.value.numel(); ++i) flat[off + i] = e.value[i];
        off += e.value.numel();
    }
    std::ofstream mf(stem + ".manifest.json");
    if (!mf) throw ConfigError("checkpoint: cannot write manifest for " + stem);
    mf << manifest.dump(2) << "\n";
    io::write_tensor_file(stem + ".msct", flat);
}

template <typename T>
void load_checkpoint(ParamStore<T>& store, const std::string& stem) {
    std::ifstream mf(stem + ".manifest.json");
    if (!mf) throw ConfigError("checkpoint: cannot open manifest for " + stem);
    json manifest = json::parse(mf);
    Tensor<T> flat = io::read_tensor_file_as<T>(stem + ".msct");
    for (const auto& item : manifest) {
        std::string name = item.at("name").get<std::string>();
        std::vector<int> dims = item.at("dims").get<std::vector<int>>();
        std::int64_t off =
            item.at("byte_offset").get<std::int64_t>() / static_cast<std::int64_t>(sizeof(T));
        Tensor<T>& dst = store.value(name);
        if (dst.dims() != dims) {
            throw ShapeError("checkpoint: dims mismatch for " + name);
        }
        for (std::int64_t i = 0; i < dst.numel(); ++i) dst[i] = flat[off + i];
    }
}

template class ParamStore<float>;
template class ParamStore<double>;
template Tensor<float> init_trunc_normal<float>(const std::vector<int>&, std::uint64_t,
                                                const std::string&, double);
template Tensor<double> init_trunc_normal<double>(const std::vector<int>&, std::uint64_t,
                                                  const std::string&, double);
template void save_checkpoint<float>(const ParamStore<float>&, const std::string&);
template void save_checkpoint<double>(const ParamStore<double>&, const std::string&);
template void load_checkpoint<float>(ParamStore<float>&, const std::string&);
template void load_checkpoint<double>(ParamStore<double>&, const std::string&);

}  // namespace mscsa
