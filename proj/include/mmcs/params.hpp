#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmcs/rng.hpp"
#include "mmcs/tape.hpp"
#include "mmcs/tensor.hpp"

namespace mmcs {

// Registry of learnable tensors. Insertion order is the canonical order for
// checkpoints, optimizer state and gradient reports; names are unique.
class ParamStore {
public:
    void add(const std::string& name, Tensor init) {
        if (index_.count(name))
            throw ConfigError("duplicate parameter name: " + name);
        index_[name] = static_cast<int>(names_.size());
        names_.push_back(name);
        values_.push_back(std::move(init));
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Tensor& value(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return values_[static_cast<size_t>(it->second)];
    }

    const Tensor& value(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return values_[static_cast<size_t>(it->second)];
    }

    const std::vector<std::string>& names() const { return names_; }
    size_t count() const { return names_.size(); }

    int64_t total_coords() const {
        int64_t n = 0;
        for (const auto& v : values_) n += v.size();
        return n;
    }

private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
    std::unordered_map<std::string, int> index_;
};

using GradMap = std::unordered_map<std::string, Tensor>;

// Lazily places parameters on a tape as gradient-bearing leaves. Each
// parameter is bound at most once per tape, so repeated uses share a node and
// their gradients accumulate.
class BoundParams {
public:
    BoundParams(Tape& tape, const ParamStore& store) : tape_(&tape), store_(&store) {}

    ValueId operator[](const std::string& name) {
        auto it = bound_.find(name);
        if (it != bound_.end()) return it->second;
        ValueId id = tape_->leaf(store_->value(name), /*needs_grad=*/true);
        bound_.emplace(name, id);
        return id;
    }

    // Gradients for every registered parameter; zeros where a parameter never
    // reached the tape or received no flow.
    GradMap collect_grads() const {
        GradMap out;
        for (const auto& name : store_->names()) {
            auto it = bound_.find(name);
            if (it != bound_.end() && !tape_->grad(it->second).empty()) {
                out[name] = tape_->grad(it->second);
            } else {
                out[name] = Tensor(store_->value(name).shape());
            }
        }
        return out;
    }

private:
    Tape* tape_;
    const ParamStore* store_;
    std::unordered_map<std::string, ValueId> bound_;
};

inline Tensor xavier_uniform(int rows, int cols, Lcg64& rng) {
    Tensor t({rows, cols});
    const double limit = std::sqrt(6.0 / (rows + cols));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
    return t;
}

} // namespace mmcs
