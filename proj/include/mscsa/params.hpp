#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "mscsa/rng.hpp"
#include "mscsa/tensor.hpp"

namespace mscsa {

// Named, ordered collection of model tensors. Learnable weights and
// BatchNorm running statistics live side by side; the `learnable` flag
// tells the optimizer and the gradcheck which entries to touch.
template <typename T>
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor<T> value;
        bool learnable = true;
    };

    int add(const std::string& name, Tensor<T> value, bool learnable = true);

    int index_of(const std::string& name) const;
    bool contains(const std::string& name) const { return lookup_.count(name) > 0; }

    Tensor<T>& value(int idx) { return entries_[static_cast<std::size_t>(idx)].value; }
    const Tensor<T>& value(int idx) const { return entries_[static_cast<std::size_t>(idx)].value; }
    Tensor<T>& value(const std::string& name) { return value(index_of(name)); }

    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }
    int size() const { return static_cast<int>(entries_.size()); }

    // every stored element, matching the checkpoint payload element count
    std::int64_t total_elements() const;
    std::int64_t learnable_elements() const;
    std::int64_t elements_with_prefix(const std::string& prefix) const;

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, int> lookup_;
};

// Deterministic initialization: truncated normal (std 0.02) for weights,
// zeros for biases, identity affine for norms. Each tensor draws from a
// stream derived from the seed and its name, so values do not depend on
// registration order.
template <typename T>
Tensor<T> init_trunc_normal(const std::vector<int>& dims, std::uint64_t seed,
                            const std::string& name, double std_dev = 0.02);

// Checkpoint: <stem>.manifest.json (ordered entries: name, dims, dtype,
// byte offset into the payload data section) + <stem>.msct (one flat MSCT
// tensor concatenating every entry). Round trips are bit-exact.
template <typename T>
void save_checkpoint(const ParamStore<T>& store, const std::string& stem);

template <typename T>
void load_checkpoint(ParamStore<T>& store, const std::string& stem);

}  // namespace mscsa
