#pragma once

#include <bit>
#include <cstdint>
#include <map>
#include <string>

#include "mammofl/tensor.hpp"

namespace mammofl::nn {

/// Ordered name -> tensor mapping. Canonical order is lexicographic by name
/// (std::map iteration order), which fixes serialization and aggregation
/// order once and for all.
template <typename T>
struct WeightMap {
    std::map<std::string, Tens<T>> entries;

    bool same_structure(const WeightMap& o) const {
        if (entries.size() != o.entries.size()) return false;
        auto a = entries.begin();
        auto b = o.entries.begin();
        for (; a != entries.end(); ++a, ++b) {
            if (a->first != b->first || a->second.dims != b->second.dims) return false;
        }
        return true;
    }

    std::int64_t parameter_count() const {
        std::int64_t n = 0;
        for (const auto& [name, t] : entries) n += t.size();
        return n;
    }
};

using ModelWeights = WeightMap<float>;
using ModelWeights64 = WeightMap<double>;

template <typename T>
inline WeightMap<double> widen(const WeightMap<T>& w) {
    WeightMap<double> out;
    for (const auto& [name, t] : w.entries) out.entries.emplace(name, widen(t));
    return out;
}

template <typename T>
inline WeightMap<float> narrow(const WeightMap<T>& w) {
    WeightMap<float> out;
    for (const auto& [name, t] : w.entries) out.entries.emplace(name, narrow(t));
    return out;
}

inline bool bit_equal(const ModelWeights& a, const ModelWeights& b) {
    if (!a.same_structure(b)) return false;
    auto ia = a.entries.begin();
    auto ib = b.entries.begin();
    for (; ia != a.entries.end(); ++ia, ++ib) {
        const auto& da = ia->second.data;
        const auto& db = ib->second.data;
        for (std::size_t i = 0; i < da.size(); ++i) {
            // bit comparison, not value comparison: -0.0f != 0.0f here
            if (std::bit_cast<std::uint32_t>(da[i]) != std::bit_cast<std::uint32_t>(db[i]))
                return false;
        }
    }
    return true;
}

}  // namespace mammofl::nn
