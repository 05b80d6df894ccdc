#include "dph/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "dph/error.hpp"

namespace dph {

std::size_t shape_size(std::span<const std::int64_t> shape) {
    std::size_t n = 1;
    for (const auto dim : shape) {
        if (dim <= 0) {
            throw InvalidArgument("tensor dimensions must be positive");
        }
        n *= static_cast<std::size_t>(dim);
    }
    return n;
}

Tensor& ParamSet::add(std::string name, std::vector<std::int64_t> shape, float fill) {
    if (index_.contains(name)) {
        throw InvalidArgument("duplicate tensor name '" + name + "'");
    }
    const std::size_t n = shape_size(shape);
    index_.emplace(name, tensors_.size());
    tensors_.push_back(Tensor{std::move(name), std::move(shape), std::vector<float>(n, fill)});
    return tensors_.back();
}

bool ParamSet::contains(std::string_view name) const { return index_.contains(std::string(name)); }

std::size_t ParamSet::index_of(std::string_view name) const {
    const auto it = index_.find(std::string(name));
    if (it == index_.end()) {
        throw InvalidArgument("no tensor named '" + std::string(name) + "'");
    }
    return it->second;
}

std::size_t ParamSet::scalar_count() const noexcept {
    std::size_t n = 0;
    for (const auto& t : tensors_) {
        n += t.size();
    }
    return n;
}

void ParamSet::append(const ParamSet& other) {
    for (const auto& t : other) {
        add(t.name, t.shape).values = t.values;
    }
}

ParamSet ParamSet::subset(std::string_view prefix) const {
    ParamSet out;
    for (const auto& t : tensors_) {
        if (t.name.starts_with(prefix)) {
            out.add(t.name, t.shape).values = t.values;
        }
    }
    return out;
}

bool ParamSet::all_finite() const {
    for (const auto& t : tensors_) {
        for (const float v : t.values) {
            if (!std::isfinite(v)) {
                return false;
            }
        }
    }
    return true;
}

bool operator==(const ParamSet& a, const ParamSet& b) {
    if (a.count() != b.count()) {
        return false;
    }
    for (std::size_t i = 0; i < a.count(); ++i) {
        const Tensor& x = a[i];
        const Tensor& y = b[i];
        if (x.name != y.name || x.shape != y.shape || x.values.size() != y.values.size()) {
            return false;
        }
        // Bitwise comparison: -0.0 vs 0.0 and NaN payloads count as differences.
        for (std::size_t k = 0; k < x.values.size(); ++k) {
            if (std::bit_cast<std::uint32_t>(x.values[k]) != std::bit_cast<std::uint32_t>(y.values[k])) {
                return false;
            }
        }
    }
    return true;
}

GradSet::GradSet(const ParamSet& params) {
    grads_.reserve(params.count());
    for (const auto& t : params) {
        grads_.emplace_back(t.size(), 0.0);
    }
}

void GradSet::zero() {
    for (auto& g : grads_) {
        std::fill(g.begin(), g.end(), 0.0);
    }
}

void GradSet::scale(double factor) {
    for (auto& g : grads_) {
        for (double& v : g) {
            v *= factor;
        }
    }
}

double GradSet::squared_norm() const {
    double s = 0.0;
    for (const auto& g : grads_) {
        for (const double v : g) {
            s += v * v;
        }
    }
    return s;
}

bool GradSet::all_finite() const {
    for (const auto& g : grads_) {
        for (const double v : g) {
            if (!std::isfinite(v)) {
                return false;
            }
        }
    }
    return true;
}

}  // namespace dph
