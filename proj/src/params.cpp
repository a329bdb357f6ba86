#include "gsnet/params.hpp"

#include <cmath>

namespace gsnet {

double Rng::uniform() {
    // 53 random bits -> [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) {
        u1 = uniform();
    }
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::int64_t Rng::below(std::int64_t n) {
    if (n <= 0) {
        throw ContractError("Rng::below requires a positive bound");
    }
    return static_cast<std::int64_t>(uniform() * static_cast<double>(n));
}

const char* group_name(ParamGroup g) {
    switch (g) {
        case ParamGroup::Generalist:
            return "generalist";
        case ParamGroup::Specialist:
            return "specialist";
        case ParamGroup::Head:
            return "head";
    }
    return "?";
}

template <typename T>
void Parameter<T>::set_trainable(bool on) {
    var.node()->requires_grad = on;
    if (!on) {
        var.zero_grad();
    }
}

template <typename T>
Parameter<T>& ParameterStore<T>::create(const std::string& name, Shape shape, ParamGroup group, Init init, Rng& rng,
                                        std::int64_t fan_in) {
    if (params_.count(name)) {
        throw ContractError("duplicate parameter name: " + name);
    }
    Tensor<T> value(shape);
    switch (init) {
        case Init::Zeros:
            break;
        case Init::Ones:
            value.fill(T(1));
            break;
        case Init::TruncNormal:
            for (auto& v : value.values()) {
                double d = rng.normal();
                while (std::abs(d) > 2.0) {
                    d = rng.normal();
                }
                v = static_cast<T>(0.02 * d);
            }
            break;
        case Init::KaimingUniform: {
            if (fan_in <= 0) {
                throw ContractError("KaimingUniform needs a positive fan_in for " + name);
            }
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
            for (auto& v : value.values()) {
                v = static_cast<T>(rng.uniform(-bound, bound));
            }
            break;
        }
    }
    auto p = std::make_unique<Parameter<T>>();
    p->name = name;
    p->group = group;
    p->var = Var<T>::leaf(std::move(value), true);
    auto& ref = *p;
    params_.emplace(name, std::move(p));
    return ref;
}

template <typename T>
Parameter<T>* ParameterStore<T>::find(const std::string& name) {
    auto it = params_.find(name);
    return it == params_.end() ? nullptr : it->second.get();
}

template <typename T>
const Parameter<T>* ParameterStore<T>::find(const std::string& name) const {
    auto it = params_.find(name);
    return it == params_.end() ? nullptr : it->second.get();
}

template <typename T>
Parameter<T>& ParameterStore<T>::at(const std::string& name) {
    auto* p = find(name);
    if (!p) {
        throw ContractError("unknown parameter: " + name);
    }
    return *p;
}

template <typename T>
std::vector<Parameter<T>*> ParameterStore<T>::all() {
    std::vector<Parameter<T>*> out;
    out.reserve(params_.size());
    for (auto& [_, p] : params_) {
        out.push_back(p.get());
    }
    return out;
}

template <typename T>
std::vector<const Parameter<T>*> ParameterStore<T>::all() const {
    std::vector<const Parameter<T>*> out;
    out.reserve(params_.size());
    for (const auto& [_, p] : params_) {
        out.push_back(p.get());
    }
    return out;
}

template <typename T>
std::vector<Parameter<T>*> ParameterStore<T>::trainable() {
    std::vector<Parameter<T>*> out;
    for (auto& [_, p] : params_) {
        if (p->trainable()) {
            out.push_back(p.get());
        }
    }
    return out;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
    for (auto& [_, p] : params_) {
        p->var.zero_grad();
    }
}

template struct Parameter<float>;
template struct Parameter<double>;
template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace gsnet
